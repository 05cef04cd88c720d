#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace bprun {

struct PackagePin {
    std::string name;
    std::string version;

    auto operator<=>(const PackagePin&) const = default;
};

// Per-blueprint dependency declaration (`blueprint.manifest`).
struct DependencyManifest {
    std::string runtime;
    std::vector<PackagePin> packages;
};

// Engine-wide allowlist (`catalog.manifest`): runtime tag -> allowed pins.
struct DependencyCatalog {
    int version = 1;
    std::map<std::string, std::set<PackagePin>> runtimes;
};

struct ManifestViolation {
    std::string package;
    std::string version;
    std::string reason;  // not_pinned | not_in_catalog | unknown_runtime
};

struct ManifestVerdict {
    bool accepted = true;
    std::vector<ManifestViolation> violations;
};

nlohmann::json to_json(const ManifestVerdict& verdict);

// Exact version strings only ("2.31.0", "1.0.0rc1"); ranges, wildcards and
// tags such as "latest" are rejected.
bool is_pinned_version(std::string_view version);

// Parsers throw ValidationError; JSON syntax errors report the byte offset.
DependencyManifest parse_manifest(std::string_view text);
DependencyCatalog parse_catalog(std::string_view text);
DependencyManifest load_manifest(const std::string& path);
DependencyCatalog load_catalog(const std::string& path);

// Lists every violation, never just the first.
ManifestVerdict validate_manifest(const DependencyManifest& manifest, const DependencyCatalog& catalog);

// Sorted, de-duplicated package set. Throws ValidationError when the manifest
// is rejected by the catalog.
std::vector<PackagePin> resolve_manifest(const DependencyManifest& manifest, const DependencyCatalog& catalog);

}  // namespace bprun
