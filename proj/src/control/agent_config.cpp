#include "control/agent_config.hpp"

#include <fstream>
#include <sstream>

namespace bprun {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json parse_json_file(const fs::path& p) {
    auto doc = json::parse(read_file(p), nullptr, false);
    if (doc.is_discarded()) throw ValidationError("invalid JSON in " + p.string());
    return doc;
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_relative() ? base / path : path;
}

std::string require_string(const json& doc, const char* key) {
    auto it = doc.find(key);
    if (it == doc.end() || !it->is_string() || it->get<std::string>().empty()) {
        throw ValidationError(std::string("agent config needs a non-empty string '") + key + "'");
    }
    return it->get<std::string>();
}

}  // namespace

json toggles_with_defaults(const json& toggles) {
    json out{{"dc_enabled", true}, {"consolidated_tools", true}};
    if (toggles.is_object()) {
        for (const auto& [k, v] : toggles.items()) {
            if (!v.is_boolean()) throw ValidationError("toggle '" + k + "' must be a boolean");
            out[k] = v;
        }
    }
    return out;
}

AgentConfig agent_config_from_json(const json& doc, const fs::path& base_dir, const fs::path& blueprint_root) {
    if (!doc.is_object()) throw ValidationError("agent config must be an object");
    AgentConfig c;
    c.base_dir = base_dir;
    c.agent_id = require_string(doc, "agent_id");
    c.agent_token = require_string(doc, "agent_token");
    if (doc.contains("system_prompt_file")) {
        c.system_prompt = read_file(resolve(base_dir, doc["system_prompt_file"].get<std::string>()));
    } else {
        c.system_prompt = doc.value("system_prompt", std::string());
    }

    const auto& bp = doc.value("blueprint", json::object());
    c.runtime = require_string(bp, "runtime");
    c.entry_file = require_string(bp, "entry_file");
    const std::string dir = require_string(bp, "dir");
    fs::path candidate = resolve(base_dir, dir);
    if (!fs::is_directory(candidate) && fs::path(dir).is_relative()) candidate = blueprint_root / dir;
    if (!fs::is_directory(candidate)) throw ValidationError("blueprint directory not found: " + dir);
    c.blueprint_dir = fs::canonical(candidate);
    const auto entry = fs::weakly_canonical(c.blueprint_dir / c.entry_file);
    const auto rel = entry.lexically_relative(c.blueprint_dir);
    if (rel.empty() || *rel.begin() == "..") throw ValidationError("entry_file escapes the blueprint directory");
    if (!fs::is_regular_file(entry)) throw ValidationError("entry_file not found: " + entry.string());

    c.model = doc.value("model", json{{"provider", "mock"}});
    if (c.model.contains("script") && c.model["script"].is_string()) {
        c.model["script"] = resolve(base_dir, c.model["script"].get<std::string>()).string();
    }

    for (const auto& kb : doc.value("knowledge_bases", json::array())) {
        if (kb.is_string()) c.knowledge_bases.push_back({kb.get<std::string>(), {}});
        else c.knowledge_bases.push_back({require_string(kb, "id"), resolve(base_dir, require_string(kb, "dir"))});
    }

    c.tools = doc.value("tools", json::object());
    if (c.tools.contains("state")) c.tools["state"] = resolve(base_dir, c.tools["state"].get<std::string>()).string();

    if (doc.contains("limits")) c.limits = quota_spec_from_json(doc["limits"]);
    c.toggles = toggles_with_defaults(doc.value("toggles", json::object()));
    if (doc.contains("retry")) {
        const auto& r = doc["retry"];
        c.retry.max_retries = r.value("max_retries", c.retry.max_retries);
        c.retry.backoff_base_ms = r.value("backoff_base_ms", c.retry.backoff_base_ms);
        if (c.retry.max_retries < 0) throw ValidationError("retry.max_retries must be >= 0");
        if (c.retry.backoff_base_ms < 0) throw ValidationError("retry.backoff_base_ms must be >= 0");
    }
    const std::string net = doc.value("network", std::string("engine_socket_only"));
    if (net == "deny") c.network = NetworkPolicy::deny;
    else if (net == "engine_socket_only") c.network = NetworkPolicy::engine_socket_only;
    else throw ValidationError("unknown network policy '" + net + "'");
    c.deny_users = doc.value("deny_users", std::vector<std::string>{});
    return c;
}

AgentConfig load_agent_config(const fs::path& path, const fs::path& blueprint_root) {
    return agent_config_from_json(parse_json_file(path), fs::absolute(path).parent_path(), blueprint_root);
}

std::unique_ptr<LlmProvider> RegisteredAgent::make_provider() const {
    return bprun::make_provider(config.model, config.toggles, config.base_dir.string());
}

json RegisteredAgent::kb_ids() const {
    json out = json::array();
    for (const auto& kb : config.knowledge_bases) out.push_back(kb.id);
    return out;
}

bool constant_time_equals(const std::string& a, const std::string& b) {
    // Length leaks, content does not.
    unsigned char diff = a.size() == b.size() ? 0 : 1;
    const std::size_t n = std::max(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char x = i < a.size() ? static_cast<unsigned char>(a[i]) : 0;
        const unsigned char y = i < b.size() ? static_cast<unsigned char>(b[i]) : 0;
        diff |= static_cast<unsigned char>(x ^ y);
    }
    return diff == 0;
}

std::shared_ptr<const RegisteredAgent> AgentRegistry::add(AgentConfig config) {
    if (sandbox_ && !sandbox_->supports(config.runtime)) {
        throw ValidationError("unsupported runtime '" + config.runtime + "'");
    }
    auto agent = std::make_shared<RegisteredAgent>();
    agent->kbs = std::make_shared<KbStore>();
    for (const auto& kb : config.knowledge_bases) {
        if (kb.dir.empty()) {
            // Shared KB registered by another agent.
            std::lock_guard lock(mu_);
            bool found = false;
            for (const auto& [_, other] : agents_) {
                if (other->kbs->contains(kb.id)) {
                    agent->kbs->add(std::make_shared<KnowledgeBase>(other->kbs->get(kb.id)));
                    found = true;
                    break;
                }
            }
            if (!found) throw ValidationError("knowledge base '" + kb.id + "' has no directory and is not registered");
            continue;
        }
        agent->kbs->add(std::make_shared<KnowledgeBase>(KnowledgeBase::ingest_directory(kb.id, kb.dir.string())));
    }

    agent->tools = std::make_shared<ToolRegistry>();
    if (config.tools.contains("domain")) {
        json state = json::object();
        if (config.tools.contains("state")) state = parse_json_file(config.tools["state"].get<std::string>());
        agent->store = std::make_shared<bench::DomainStore>(config.tools["domain"].get<std::string>(), std::move(state));
        bench::register_domain_tools(*agent->tools, agent->store, config.toggles.value("consolidated_tools", true));
    }
    for (const auto& r : config.tools.value("remote", json::array())) {
        agent->tools->register_remote(tool_spec_from_json(json{{"name", r.at("name")},
                                                               {"description", r.value("description", "")},
                                                               {"parameters", r.value("parameters", json::object())}}),
                                      r.at("endpoint").get<std::string>(), r.value("timeout_ms", 5000));
    }

    const auto id = config.agent_id;
    agent->config = std::move(config);
    std::lock_guard lock(mu_);
    if (agents_.count(id)) throw ValidationError("agent '" + id + "' is already registered");
    agents_[id] = agent;
    return agent;
}

void AgentRegistry::load_file(const fs::path& path, const fs::path& blueprint_root) {
    const auto doc = parse_json_file(path);
    const auto base = fs::absolute(path).parent_path();
    for (const auto& entry : doc.value("agents", json::array())) {
        if (entry.is_string()) add(load_agent_config(resolve(base, entry.get<std::string>()), blueprint_root));
        else add(agent_config_from_json(entry, base, blueprint_root));
    }
}

std::shared_ptr<const RegisteredAgent> AgentRegistry::find(const std::string& agent_id) const {
    std::lock_guard lock(mu_);
    auto it = agents_.find(agent_id);
    return it == agents_.end() ? nullptr : it->second;
}

AuthVerdict AgentRegistry::validate_request(const std::string& user_id, const std::string& agent_id,
                                            const std::string& token) const {
    auto agent = find(agent_id);
    if (!agent) return {false, "not_found"};
    if (!constant_time_equals(token, agent->config.agent_token)) return {false, "unauthorized"};
    for (const auto& denied : agent->config.deny_users) {
        if (denied == user_id) return {false, "denied"};
    }
    return {true, ""};
}

std::vector<std::string> AgentRegistry::ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [id, _] : agents_) out.push_back(id);
    return out;
}

}  // namespace bprun
