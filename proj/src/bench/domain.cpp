#include "bench/domain.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <vector>

#include <openssl/sha.h>

#include "protocol/error.hpp"

namespace bprun::bench {

using nlohmann::json;

std::string sha256_hex(std::string_view data) {
    unsigned char digest[SHA256_DIGEST_LENGTH];
    SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * SHA256_DIGEST_LENGTH);
    for (unsigned char b : digest) {
        out.push_back(hex[b >> 4]);
        out.push_back(hex[b & 0xf]);
    }
    return out;
}

std::string state_hash(const json& state) {
    std::vector<std::string> digests;
    for (const auto& [collection, entities] : state.items()) {
        if (!entities.is_object()) {
            digests.push_back(sha256_hex(collection + "\n" + entities.dump()));
            continue;
        }
        for (const auto& [id, entity] : entities.items()) {
            digests.push_back(sha256_hex(collection + "/" + id + "\n" + entity.dump()));
        }
    }
    std::sort(digests.begin(), digests.end());
    std::string joined;
    for (const auto& d : digests) joined += d;
    return sha256_hex(joined);
}

DomainStore::DomainStore(std::string domain, json state) : domain_(std::move(domain)), state_(std::move(state)) {
    if (!state_.is_object()) throw ValidationError("domain state must be an object of collections");
}

json DomainStore::snapshot() const {
    std::lock_guard lock(mu_);
    return state_;
}

std::string DomainStore::hash() const {
    std::lock_guard lock(mu_);
    return state_hash(state_);
}

namespace {

double round2(double v) { return std::round(v * 100.0) / 100.0; }

class ExprParser {
public:
    explicit ExprParser(std::string_view s) : s_(s) {}

    double parse() {
        double v = expr();
        skip();
        if (pos_ != s_.size()) fail();
        return v;
    }

private:
    [[noreturn]] void fail() const {
        throw ToolFailure("cannot evaluate expression at offset " + std::to_string(pos_));
    }
    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool eat(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    double expr() {
        double v = term();
        for (;;) {
            if (eat('+')) v += term();
            else if (eat('-')) v -= term();
            else return v;
        }
    }
    double term() {
        double v = factor();
        for (;;) {
            if (eat('*')) v *= factor();
            else if (eat('/')) {
                double d = factor();
                if (d == 0.0) throw ToolFailure("division by zero");
                v /= d;
            } else return v;
        }
    }
    double factor() {
        if (eat('-')) return -factor();
        if (eat('(')) {
            double v = expr();
            if (!eat(')')) fail();
            return v;
        }
        skip();
        const auto start = pos_;
        while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) ++pos_;
        if (start == pos_) fail();
        return std::stod(std::string(s_.substr(start, pos_ - start)));
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

json prop(const char* type, const char* description) { return {{"type", type}, {"description", description}}; }

json string_array(const char* description) {
    return {{"type", "array"}, {"items", {{"type", "string"}}}, {"minItems", 1}, {"description", description}};
}

json object_schema(json properties, std::vector<std::string> required) {
    return {{"type", "object"},
            {"properties", std::move(properties)},
            {"required", std::move(required)},
            {"additionalProperties", false}};
}

ToolSpec spec(const char* name, const char* description, json parameters) {
    return ToolSpec{name, description, std::move(parameters)};
}

json& entity(json& state, const char* collection, const std::string& id, const char* what) {
    auto& coll = state[collection];
    auto it = coll.find(id);
    if (it == coll.end()) throw ToolFailure(std::string(what) + " not found: " + id);
    return *it;
}

void register_calculate(ToolRegistry& registry) {
    registry.register_builtin(
        spec("calculate", "Evaluate an arithmetic expression; the result is rounded to two decimals.",
             object_schema({{"expression", prop("string", "e.g. (25.5 - 20) * 2")}}, {"expression"})),
        [](const json& args) { return json(round2(evaluate_expression(args["expression"].get<std::string>()))); });
}

// ---- retail -------------------------------------------------------------

struct VariantRef {
    std::string product_id;
    json* variant;
};

VariantRef find_variant(json& state, const std::string& item_id) {
    for (auto& [pid, product] : state["products"].items()) {
        auto it = product["variants"].find(item_id);
        if (it != product["variants"].end()) return {pid, &*it};
    }
    throw ToolFailure("item not found: " + item_id);
}

std::vector<std::size_t> order_positions(const json& order, const json& item_ids) {
    std::vector<std::size_t> pos;
    std::vector<bool> used(order["items"].size(), false);
    for (const auto& id : item_ids) {
        bool found = false;
        for (std::size_t i = 0; i < order["items"].size(); ++i) {
            if (!used[i] && order["items"][i]["item_id"] == id) {
                used[i] = true;
                pos.push_back(i);
                found = true;
                break;
            }
        }
        if (!found) throw ToolFailure("item " + id.get<std::string>() + " is not part of order " +
                                      order["order_id"].get<std::string>());
    }
    return pos;
}

void add_payment(json& order, double amount, const std::string& method) {
    amount = round2(amount);
    if (amount == 0.0) return;
    order["payment_history"].push_back(
        {{"kind", amount > 0 ? "payment" : "refund"}, {"amount", std::fabs(amount)}, {"payment_method_id", method}});
}

json apply_exchange(json& state, json& order, const json& item_ids, const json& new_item_ids, double difference,
                    const std::string& method) {
    if (item_ids.size() != new_item_ids.size()) throw ToolFailure("item_ids and new_item_ids differ in length");
    const auto positions = order_positions(order, item_ids);
    for (std::size_t k = 0; k < positions.size(); ++k) {
        auto ref = find_variant(state, new_item_ids[k].get<std::string>());
        auto& line = order["items"][positions[k]];
        line["item_id"] = new_item_ids[k];
        line["product_id"] = ref.product_id;
        line["options"] = (*ref.variant)["options"];
        line["price"] = (*ref.variant)["price"];
        (*ref.variant)["stock"] = (*ref.variant)["stock"].get<int>() - 1;
    }
    order["status"] = "exchanged";
    add_payment(order, difference, method);
    return {{"order_id", order["order_id"]}, {"status", order["status"]}, {"price_difference", round2(difference)}};
}

json apply_return(json& order, const json& item_ids, double refund, const std::string& method) {
    order_positions(order, item_ids);
    order["status"] = "returned";
    order["returned_item_ids"] = item_ids;
    add_payment(order, -refund, method);
    return {{"order_id", order["order_id"]}, {"status", order["status"]}, {"refund", round2(refund)}};
}

void check_owner(json& state, const json& order, const std::string& email) {
    const auto& user = entity(state, "users", order["user_id"].get<std::string>(), "user");
    if (user["email"] != email) throw ToolFailure("order " + order["order_id"].get<std::string>() + " does not belong to " + email);
}

}  // namespace

double evaluate_expression(std::string_view expr) { return ExprParser(expr).parse(); }

void register_retail_tools(ToolRegistry& registry, std::shared_ptr<DomainStore> store, bool consolidated) {
    auto s = store;
    registry.register_builtin(
        spec("find_user_id_by_email", "Look up a user id by email address.",
             object_schema({{"email", prop("string", "customer email")}}, {"email"})),
        [s](const json& args) {
            return s->with_state([&](json& st) -> json {
                for (const auto& [id, user] : st["users"].items()) {
                    if (user["email"] == args["email"]) return id;
                }
                throw ToolFailure("no user with email " + args["email"].get<std::string>());
            });
        });
    registry.register_builtin(
        spec("get_user_details", "Profile, address, payment methods and order ids of a user.",
             object_schema({{"user_id", prop("string", "user id")}}, {"user_id"})),
        [s](const json& args) {
            return s->with_state([&](json& st) { return entity(st, "users", args["user_id"], "user"); });
        });
    registry.register_builtin(
        spec("get_order_details", "Status, items and payments of an order.",
             object_schema({{"order_id", prop("string", "order id such as #W87")}}, {"order_id"})),
        [s](const json& args) {
            return s->with_state([&](json& st) { return entity(st, "orders", args["order_id"], "order"); });
        });
    registry.register_builtin(
        spec("get_product_details", "Product with all variants, prices and stock.",
             object_schema({{"product_id", prop("string", "product id")}}, {"product_id"})),
        [s](const json& args) {
            return s->with_state([&](json& st) { return entity(st, "products", args["product_id"], "product"); });
        });
    registry.register_builtin(
        spec("check_item_stock", "Units in stock for one variant.",
             object_schema({{"item_id", prop("string", "variant item id")}}, {"item_id"})),
        [s](const json& args) {
            return s->with_state([&](json& st) -> json {
                auto ref = find_variant(st, args["item_id"]);
                return {{"item_id", args["item_id"]}, {"stock", (*ref.variant)["stock"]}};
            });
        });
    registry.register_builtin(
        spec("get_item_price", "Current price of one variant.",
             object_schema({{"item_id", prop("string", "variant item id")}}, {"item_id"})),
        [s](const json& args) {
            return s->with_state([&](json& st) -> json {
                auto ref = find_variant(st, args["item_id"]);
                return {{"item_id", args["item_id"]}, {"price", (*ref.variant)["price"]}};
            });
        });
    register_calculate(registry);
    registry.register_builtin(
        spec("cancel_pending_order", "Cancel an order that has not shipped; refunds the original payment.",
             object_schema({{"order_id", prop("string", "order id")},
                            {"reason", {{"type", "string"}, {"enum", {"no longer needed", "ordered by mistake"}}}}},
                           {"order_id", "reason"})),
        [s](const json& args) {
            return s->with_state([&](json& st) -> json {
                auto& order = entity(st, "orders", args["order_id"], "order");
                if (order["status"] != "pending") {
                    throw ToolFailure("order " + args["order_id"].get<std::string>() + " is " +
                                      order["status"].get<std::string>() + ", only pending orders can be cancelled");
                }
                double total = 0;
                for (const auto& item : order["items"]) total += item["price"].get<double>();
                order["status"] = "cancelled";
                order["cancel_reason"] = args["reason"];
                add_payment(order, -total, order["payment_method_id"]);
                return {{"order_id", order["order_id"]}, {"status", "cancelled"}, {"refund", round2(total)}};
            });
        });
    registry.register_builtin(
        spec("return_order_items", "Mark items of an order as returned and refund the given amount.",
             object_schema({{"order_id", prop("string", "order id")},
                            {"item_ids", string_array("items to return")},
                            {"refund_amount", {{"type", "number"}, {"minimum", 0}}},
                            {"payment_method_id", prop("string", "refund destination")}},
                           {"order_id", "item_ids", "refund_amount", "payment_method_id"})),
        [s](const json& args) {
            return s->with_state([&](json& st) {
                auto& order = entity(st, "orders", args["order_id"], "order");
                return apply_return(order, args["item_ids"], args["refund_amount"].get<double>(),
                                    args["payment_method_id"]);
            });
        });
    registry.register_builtin(
        spec("exchange_order_items", "Swap items of an order for other variants and settle the given difference.",
             object_schema({{"order_id", prop("string", "order id")},
                            {"item_ids", string_array("items to give back")},
                            {"new_item_ids", string_array("replacement variants, same order")},
                            {"price_difference", prop("number", "new minus old; negative means refund")},
                            {"payment_method_id", prop("string", "payment method to settle with")}},
                           {"order_id", "item_ids", "new_item_ids", "price_difference", "payment_method_id"})),
        [s](const json& args) {
            return s->with_state([&](json& st) {
                auto& order = entity(st, "orders", args["order_id"], "order");
                return apply_exchange(st, order, args["item_ids"], args["new_item_ids"],
                                      args["price_difference"].get<double>(), args["payment_method_id"]);
            });
        });
    registry.register_builtin(
        spec("modify_user_address", "Replace a user's default shipping address.",
             object_schema({{"user_id", prop("string", "user id")},
                            {"address", object_schema({{"address1", prop("string", "street")},
                                                       {"city", prop("string", "city")},
                                                       {"zip", prop("string", "postal code")}},
                                                      {"address1", "city", "zip"})}},
                           {"user_id", "address"})),
        [s](const json& args) {
            return s->with_state([&](json& st) -> json {
                auto& user = entity(st, "users", args["user_id"], "user");
                user["address"] = args["address"];
                return {{"user_id", user["user_id"]}, {"address", user["address"]}};
            });
        });

    if (!consolidated) return;

    registry.register_builtin(
        spec("exchange_delivered_order_items",
             "Exchange delivered items for other options of the same products. Checks ownership, status and stock, "
             "prices the difference and settles it with the original payment method.",
             object_schema({{"order_id", prop("string", "order id")},
                            {"email", prop("string", "email of the order owner")},
                            {"item_ids", string_array("items to exchange")},
                            {"new_options", {{"type", "array"}, {"items", {{"type", "object"}}}, {"minItems", 1}}}},
                           {"order_id", "email", "item_ids", "new_options"})),
        [s](const json& args) {
            return s->with_state([&](json& st) {
                auto& order = entity(st, "orders", args["order_id"], "order");
                check_owner(st, order, args["email"]);
                if (order["status"] != "delivered") {
                    throw ToolFailure("order " + args["order_id"].get<std::string>() + " is " +
                                      order["status"].get<std::string>() + ", only delivered orders can be exchanged");
                }
                if (args["item_ids"].size() != args["new_options"].size()) {
                    throw ToolFailure("one set of new options is needed per item");
                }
                const auto positions = order_positions(order, args["item_ids"]);
                json new_ids = json::array();
                double difference = 0;
                for (std::size_t k = 0; k < positions.size(); ++k) {
                    const auto& line = order["items"][positions[k]];
                    const auto& product = entity(st, "products", line["product_id"], "product");
                    std::string match;
                    for (const auto& [item_id, variant] : product["variants"].items()) {
                        if (variant["options"] == args["new_options"][k]) match = item_id;
                    }
                    if (match.empty()) throw ToolFailure("no variant of " + product["name"].get<std::string>() +
                                                         " with options " + args["new_options"][k].dump());
                    const auto& variant = product["variants"][match];
                    if (variant["stock"].get<int>() <= 0) {
                        throw ToolFailure("item " + match + " (" + product["name"].get<std::string>() + ") is out of stock");
                    }
                    difference += variant["price"].get<double>() - line["price"].get<double>();
                    new_ids.push_back(match);
                }
                auto out = apply_exchange(st, order, args["item_ids"], new_ids, difference, order["payment_method_id"]);
                out["new_item_ids"] = new_ids;
                return out;
            });
        });
    registry.register_builtin(
        spec("process_return_request",
             "Return delivered items: checks ownership and status, refunds their price to the original payment method.",
             object_schema({{"order_id", prop("string", "order id")},
                            {"email", prop("string", "email of the order owner")},
                            {"item_ids", string_array("items to return")}},
                           {"order_id", "email", "item_ids"})),
        [s](const json& args) {
            return s->with_state([&](json& st) {
                auto& order = entity(st, "orders", args["order_id"], "order");
                check_owner(st, order, args["email"]);
                if (order["status"] != "delivered") {
                    throw ToolFailure("order " + args["order_id"].get<std::string>() + " is " +
                                      order["status"].get<std::string>() + ", only delivered orders can be returned");
                }
                double refund = 0;
                for (auto p : order_positions(order, args["item_ids"])) refund += order["items"][p]["price"].get<double>();
                return apply_return(order, args["item_ids"], refund, order["payment_method_id"]);
            });
        });
}

// ---- airline ------------------------------------------------------------

namespace {

std::string flight_key(const json& number, const json& date) {
    return number.get<std::string>() + "_" + date.get<std::string>();
}

void adjust_seats(json& st, const json& legs, const std::string& cabin, int delta) {
    for (const auto& leg : legs) {
        auto& flight = entity(st, "flights", flight_key(leg["flight_number"], leg["date"]), "flight");
        auto& seats = flight["cabins"][cabin]["seats"];
        seats = seats.get<int>() + delta;
    }
}

}  // namespace

void register_airline_tools(ToolRegistry& registry, std::shared_ptr<DomainStore> store) {
    auto s = store;
    registry.register_builtin(
        spec("get_user_details", "Profile, payment methods and reservation ids of a user.",
             object_schema({{"user_id", prop("string", "user id")}}, {"user_id"})),
        [s](const json& args) {
            return s->with_state([&](json& st) { return entity(st, "users", args["user_id"], "user"); });
        });
    registry.register_builtin(
        spec("get_reservation_details", "Flights, cabin, passengers, fare rules and payments of a reservation.",
             object_schema({{"reservation_id", prop("string", "reservation id")}}, {"reservation_id"})),
        [s](const json& args) {
            return s->with_state(
                [&](json& st) { return entity(st, "reservations", args["reservation_id"], "reservation"); });
        });
    registry.register_builtin(
        spec("search_direct_flight", "Direct flights between two airports on a date.",
             object_schema({{"origin", prop("string", "IATA code")},
                            {"destination", prop("string", "IATA code")},
                            {"date", prop("string", "YYYY-MM-DD")}},
                           {"origin", "destination", "date"})),
        [s](const json& args) {
            return s->with_state([&](json& st) {
                json out = json::array();
                for (const auto& [_, f] : st["flights"].items()) {
                    if (f["origin"] == args["origin"] && f["destination"] == args["destination"] &&
                        f["date"] == args["date"]) {
                        out.push_back(f);
                    }
                }
                return out;
            });
        });
    registry.register_builtin(
        spec("cancel_reservation", "Cancel a reservation and refund every payment to its original method.",
             object_schema({{"reservation_id", prop("string", "reservation id")}}, {"reservation_id"})),
        [s](const json& args) {
            return s->with_state([&](json& st) -> json {
                auto& r = entity(st, "reservations", args["reservation_id"], "reservation");
                if (r["status"] != "active") throw ToolFailure("reservation is already " + r["status"].get<std::string>());
                double refunded = 0;
                json refunds = json::array();
                for (const auto& p : r["payment_history"]) {
                    if (p["kind"] != "payment") continue;
                    refunded += p["amount"].get<double>();
                    refunds.push_back({{"kind", "refund"}, {"amount", p["amount"]}, {"payment_method_id", p["payment_method_id"]}});
                }
                for (auto& rf : refunds) r["payment_history"].push_back(rf);
                r["status"] = "cancelled";
                adjust_seats(st, r["flights"], r["cabin"], static_cast<int>(r["passengers"].size()));
                return {{"reservation_id", r["reservation_id"]}, {"status", "cancelled"}, {"refund", round2(refunded)}};
            });
        });
    registry.register_builtin(
        spec("update_reservation_flights",
             "Replace the flights and cabin of a reservation; the fare difference is charged or refunded.",
             object_schema({{"reservation_id", prop("string", "reservation id")},
                            {"cabin", {{"type", "string"}, {"enum", {"economy", "business"}}}},
                            {"flights", {{"type", "array"},
                                         {"minItems", 1},
                                         {"items", object_schema({{"flight_number", prop("string", "flight number")},
                                                                  {"date", prop("string", "YYYY-MM-DD")}},
                                                                 {"flight_number", "date"})}}},
                            {"payment_method_id", prop("string", "payment method for the difference")}},
                           {"reservation_id", "cabin", "flights", "payment_method_id"})),
        [s](const json& args) {
            return s->with_state([&](json& st) -> json {
                auto& r = entity(st, "reservations", args["reservation_id"], "reservation");
                if (r["status"] != "active") throw ToolFailure("reservation is " + r["status"].get<std::string>());
                const auto pax = static_cast<double>(r["passengers"].size());
                const std::string cabin = args["cabin"];
                double old_total = 0;
                for (const auto& leg : r["flights"]) old_total += leg["price"].get<double>() * pax;
                json legs = json::array();
                double new_total = 0;
                for (const auto& want : args["flights"]) {
                    const auto& f = entity(st, "flights", flight_key(want["flight_number"], want["date"]), "flight");
                    if (!f["cabins"].contains(cabin)) throw ToolFailure("flight has no " + cabin + " cabin");
                    if (f["cabins"][cabin]["seats"].get<int>() < static_cast<int>(pax)) {
                        throw ToolFailure("not enough " + cabin + " seats on " + want["flight_number"].get<std::string>());
                    }
                    const double price = f["cabins"][cabin]["price"].get<double>();
                    new_total += price * pax;
                    legs.push_back({{"flight_number", f["flight_number"]},
                                    {"date", f["date"]},
                                    {"origin", f["origin"]},
                                    {"destination", f["destination"]},
                                    {"price", price}});
                }
                adjust_seats(st, r["flights"], r["cabin"], static_cast<int>(pax));
                adjust_seats(st, legs, cabin, -static_cast<int>(pax));
                r["flights"] = legs;
                r["cabin"] = cabin;
                const double diff = round2(new_total - old_total);
                add_payment(r, diff, args["payment_method_id"]);
                return {{"reservation_id", r["reservation_id"]}, {"cabin", cabin}, {"fare_difference", diff}};
            });
        });
    register_calculate(registry);
}

// ---- ops (OOM triage) ---------------------------------------------------

namespace {

json& service_by_pid(json& st, const json& pid) {
    for (auto& [_, svc] : st["services"].items()) {
        if (svc["pid"] == pid) return svc;
    }
    throw ToolFailure("no JVM with pid " + pid.dump());
}

}  // namespace

void register_ops_tools(ToolRegistry& registry, std::shared_ptr<DomainStore> store) {
    auto s = store;
    registry.register_builtin(
        spec("run_jstat", "jstat -gcutil for a JVM process.",
             object_schema({{"pid", {{"type", "integer"}, {"minimum", 1}}}}, {"pid"})),
        [s](const json& args) {
            return s->with_state([&](json& st) -> json {
                const auto& gc = service_by_pid(st, args["pid"])["gc"];
                char line[160];
                std::snprintf(line, sizeof(line), "%6.2f %6.2f %6.2f %6.2f %6.2f %5d %5d", gc["s0"].get<double>(),
                              gc["s1"].get<double>(), gc["eden"].get<double>(), gc["old"].get<double>(),
                              gc["meta"].get<double>(), gc["ygc"].get<int>(), gc["fgc"].get<int>());
                return {{"output", std::string("    S0     S1      E      O      M   YGC   FGC\n") + line}};
            });
        });
    registry.register_builtin(
        spec("run_jmap", "jmap -dump:live for a JVM process; returns the dump path.",
             object_schema({{"pid", {{"type", "integer"}, {"minimum", 1}}}}, {"pid"})),
        [s](const json& args) {
            return s->with_state([&](json& st) -> json {
                auto& svc = service_by_pid(st, args["pid"]);
                const std::string path = "/var/dumps/heap-" + std::to_string(args["pid"].get<long long>()) + ".hprof";
                svc["dumps"].push_back(path);
                return {{"dump_path", path}};
            });
        });
    registry.register_builtin(
        spec("analyze_heap_dump", "Dominator summary of a heap dump.",
             object_schema({{"dump_path", prop("string", "path returned by run_jmap")}}, {"dump_path"})),
        [s](const json& args) {
            return s->with_state([&](json& st) -> json {
                for (auto& [_, svc] : st["services"].items()) {
                    for (const auto& d : svc["dumps"]) {
                        if (d == args["dump_path"]) return svc["heap_profile"];
                    }
                }
                throw ToolFailure("no such dump: " + args["dump_path"].get<std::string>());
            });
        });
}

void register_domain_tools(ToolRegistry& registry, std::shared_ptr<DomainStore> store, bool consolidated) {
    const auto& d = store->domain();
    if (d == "retail") register_retail_tools(registry, std::move(store), consolidated);
    else if (d == "airline") register_airline_tools(registry, std::move(store));
    else if (d == "ops") register_ops_tools(registry, std::move(store));
    else throw ValidationError("unknown tool domain '" + d + "'");
}

}  // namespace bprun::bench
