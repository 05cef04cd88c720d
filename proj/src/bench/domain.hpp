#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include <json.hpp>

#include "providers/tool_registry.hpp"

namespace bprun::bench {

std::string sha256_hex(std::string_view data);

// Order-independent digest of a domain state. Every top-level member is an
// entity collection (object keyed by id); each entity is hashed on its own
// and the sorted entity digests are hashed again.
std::string state_hash(const nlohmann::json& state);

// In-memory domain database. Mutated only through the tools registered on it.
class DomainStore {
public:
    DomainStore(std::string domain, nlohmann::json state);

    const std::string& domain() const { return domain_; }
    nlohmann::json snapshot() const;
    std::string hash() const;

    // Runs fn(state) under the store lock and returns its result.
    template <typename Fn>
    auto with_state(Fn&& fn) {
        std::lock_guard lock(mu_);
        return fn(state_);
    }

private:
    std::string domain_;
    mutable std::mutex mu_;
    nlohmann::json state_;
};

// Arithmetic over + - * / and parentheses; result rounded to cents.
double evaluate_expression(std::string_view expr);

// Fine-grained tools only when `consolidated` is false; the consolidated
// retail tools are added on top when it is true.
void register_retail_tools(ToolRegistry& registry, std::shared_ptr<DomainStore> store, bool consolidated);
void register_airline_tools(ToolRegistry& registry, std::shared_ptr<DomainStore> store);
void register_ops_tools(ToolRegistry& registry, std::shared_ptr<DomainStore> store);

// Dispatches on store->domain(): retail, airline or ops.
void register_domain_tools(ToolRegistry& registry, std::shared_ptr<DomainStore> store, bool consolidated);

}  // namespace bprun::bench
