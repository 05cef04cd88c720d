#include "sandbox/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "protocol/error.hpp"

namespace bprun {

namespace {

nlohmann::json parse_document(std::string_view text, const char* what) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string(what) + " is not parseable at byte " + std::to_string(e.byte) +
                              ": " + e.what());
    }
}

std::vector<PackagePin> parse_packages(const nlohmann::json& list, const std::string& where) {
    std::vector<PackagePin> out;
    if (list.is_null()) return out;
    if (!list.is_array()) throw ValidationError(where + ".packages must be an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
        const auto& p = list[i];
        const std::string at = where + ".packages[" + std::to_string(i) + "]";
        if (!p.is_object() || !p.contains("name") || !p["name"].is_string() || !p.contains("version") ||
            !p["version"].is_string()) {
            throw ValidationError(at + " needs string fields name and version");
        }
        out.push_back({p["name"].get<std::string>(), p["version"].get<std::string>()});
    }
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

nlohmann::json to_json(const ManifestVerdict& verdict) {
    nlohmann::json v = nlohmann::json::array();
    for (const auto& x : verdict.violations) {
        v.push_back({{"package", x.package}, {"version", x.version}, {"reason", x.reason}});
    }
    return {{"accepted", verdict.accepted}, {"violations", v}};
}

bool is_pinned_version(std::string_view version) {
    if (version.empty() || !(version.front() >= '0' && version.front() <= '9')) return false;
    for (char c : version) {
        bool ok = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || c == '.' || c == '-' || c == '+';
        if (!ok) return false;
    }
    // "1.x" style wildcards
    std::size_t start = 0;
    while (start <= version.size()) {
        auto end = version.find('.', start);
        if (end == std::string_view::npos) end = version.size();
        if (version.substr(start, end - start) == "x") return false;
        start = end + 1;
    }
    return true;
}

DependencyManifest parse_manifest(std::string_view text) {
    auto doc = parse_document(text, "manifest");
    if (!doc.is_object()) throw ValidationError("manifest must be an object");
    if (!doc.contains("runtime") || !doc["runtime"].is_string()) {
        throw ValidationError("manifest.runtime must be a string");
    }
    return {doc["runtime"].get<std::string>(), parse_packages(doc.value("packages", nlohmann::json()), "manifest")};
}

DependencyCatalog parse_catalog(std::string_view text) {
    auto doc = parse_document(text, "catalog");
    if (!doc.is_object() || !doc.contains("runtimes") || !doc["runtimes"].is_array()) {
        throw ValidationError("catalog must be an object with a 'runtimes' array");
    }
    DependencyCatalog catalog;
    catalog.version = doc.value("version", 1);
    for (std::size_t i = 0; i < doc["runtimes"].size(); ++i) {
        const auto& section = doc["runtimes"][i];
        const std::string where = "catalog.runtimes[" + std::to_string(i) + "]";
        if (!section.is_object() || !section.contains("runtime") || !section["runtime"].is_string()) {
            throw ValidationError(where + ".runtime must be a string");
        }
        auto& pins = catalog.runtimes[section["runtime"].get<std::string>()];
        for (auto& pin : parse_packages(section.value("packages", nlohmann::json()), where)) {
            if (!is_pinned_version(pin.version)) {
                throw ValidationError(where + ": catalog entry " + pin.name + " is not pinned");
            }
            pins.insert(std::move(pin));
        }
    }
    return catalog;
}

DependencyManifest load_manifest(const std::string& path) { return parse_manifest(read_file(path)); }

DependencyCatalog load_catalog(const std::string& path) { return parse_catalog(read_file(path)); }

ManifestVerdict validate_manifest(const DependencyManifest& manifest, const DependencyCatalog& catalog) {
    ManifestVerdict verdict;
    auto section = catalog.runtimes.find(manifest.runtime);
    if (section == catalog.runtimes.end()) {
        verdict.violations.push_back({"", "", "unknown_runtime: " + manifest.runtime});
    }
    for (const auto& pin : manifest.packages) {
        if (!is_pinned_version(pin.version)) {
            verdict.violations.push_back({pin.name, pin.version, "not_pinned"});
        } else if (section == catalog.runtimes.end() || !section->second.count(pin)) {
            verdict.violations.push_back({pin.name, pin.version, "not_in_catalog"});
        }
    }
    verdict.accepted = verdict.violations.empty();
    return verdict;
}

std::vector<PackagePin> resolve_manifest(const DependencyManifest& manifest, const DependencyCatalog& catalog) {
    auto verdict = validate_manifest(manifest, catalog);
    if (!verdict.accepted) {
        std::string msg = "manifest rejected:";
        for (const auto& v : verdict.violations) msg += " " + v.package + "@" + v.version + " (" + v.reason + ")";
        throw ValidationError(msg);
    }
    std::vector<PackagePin> out = manifest.packages;
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace bprun
