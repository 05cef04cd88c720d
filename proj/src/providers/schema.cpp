#include "providers/schema.hpp"

namespace bprun {

namespace {

bool matches_type(const std::string& type, const nlohmann::json& v) {
    if (type == "string") return v.is_string();
    if (type == "integer") return v.is_number_integer();
    if (type == "number") return v.is_number();
    if (type == "boolean") return v.is_boolean();
    if (type == "array") return v.is_array();
    if (type == "object") return v.is_object();
    if (type == "null") return v.is_null();
    return true;  // unknown type keywords are permissive
}

std::string join(const std::string& base, const std::string& key) {
    return base.empty() ? key : base + "." + key;
}

void check(const nlohmann::json& schema, const nlohmann::json& value, const std::string& path,
           std::vector<SchemaViolation>& out) {
    if (!schema.is_object()) return;

    if (auto t = schema.find("type"); t != schema.end()) {
        bool ok = false;
        if (t->is_string()) {
            ok = matches_type(t->get<std::string>(), value);
        } else if (t->is_array()) {
            for (const auto& alt : *t) ok = ok || (alt.is_string() && matches_type(alt.get<std::string>(), value));
        } else {
            ok = true;
        }
        if (!ok) {
            out.push_back({path, "expected type " + t->dump()});
            return;
        }
    }

    if (auto e = schema.find("enum"); e != schema.end() && e->is_array()) {
        bool found = false;
        for (const auto& option : *e) found = found || option == value;
        if (!found) out.push_back({path, "value not in enum " + e->dump()});
    }

    if (value.is_number()) {
        if (auto m = schema.find("minimum"); m != schema.end() && m->is_number() &&
                                              value.get<double>() < m->get<double>()) {
            out.push_back({path, "below minimum " + m->dump()});
        }
        if (auto m = schema.find("maximum"); m != schema.end() && m->is_number() &&
                                              value.get<double>() > m->get<double>()) {
            out.push_back({path, "above maximum " + m->dump()});
        }
    }

    if (value.is_object()) {
        const auto props = schema.value("properties", nlohmann::json::object());
        if (auto req = schema.find("required"); req != schema.end() && req->is_array()) {
            for (const auto& name : *req) {
                if (name.is_string() && !value.contains(name.get<std::string>())) {
                    out.push_back({join(path, name.get<std::string>()), "required field missing"});
                }
            }
        }
        const bool closed = schema.contains("additionalProperties") &&
                            schema["additionalProperties"].is_boolean() &&
                            !schema["additionalProperties"].get<bool>();
        for (const auto& [key, child] : value.items()) {
            if (auto p = props.find(key); p != props.end()) {
                check(*p, child, join(path, key), out);
            } else if (closed) {
                out.push_back({join(path, key), "unexpected field"});
            }
        }
    }

    if (value.is_array()) {
        if (auto m = schema.find("minItems"); m != schema.end() && m->is_number_unsigned() &&
                                               value.size() < m->get<std::size_t>()) {
            out.push_back({path, "fewer than " + m->dump() + " items"});
        }
        if (auto items = schema.find("items"); items != schema.end()) {
            for (std::size_t i = 0; i < value.size(); ++i) {
                check(*items, value[i], path + "[" + std::to_string(i) + "]", out);
            }
        }
    }
}

}  // namespace

std::vector<SchemaViolation> validate_schema(const nlohmann::json& schema, const nlohmann::json& value) {
    std::vector<SchemaViolation> out;
    check(schema, value, "", out);
    return out;
}

std::string describe(const std::vector<SchemaViolation>& violations) {
    std::string s;
    for (const auto& v : violations) {
        if (!s.empty()) s += "; ";
        s += (v.path.empty() ? std::string("<root>") : v.path) + ": " + v.message;
    }
    return s;
}

}  // namespace bprun
