// Retail customer-service workflow. The model only classifies requests,
// extracts slots and (without consolidated tools) picks variants; every
// branch below is decided by code on tool results and strict parses.

#include <map>
#include <set>

#include "common.hpp"

using namespace bprun;
using namespace bprun::blueprint;
using nlohmann::json;

namespace {

const char* kRoutePrompt =
    "Classify the customer's latest message. Reply with one JSON object with key \"intent\" "
    "(product_info, policy_question, cancel_order, return_items, exchange_items, change_address, smalltalk, done) "
    "and the slots the intent needs.";

const char* kPickPrompt =
    "Given a product and the options the customer wants, reply with one JSON object {\"item_id\": ...} naming the "
    "matching variant.";

const char* kPolicy =
    "Only pending orders can be cancelled. Only delivered orders can be returned or exchanged. Exchanges keep the "
    "product and change its options. Refunds go to the original payment method.";

class RetailAgent {
public:
    explicit RetailAgent(AgentLink& link)
        : link_(link), dc_(link.toggle("dc_enabled")), rt_(link.toggle("consolidated_tools")) {}

    void run() {
        std::string text = opening_message(link_);
        for (;;) {
            if (is_stop(text)) link_.finish("ok", {{"ended_by", "user"}});
            json intent = route(text);
            const std::string kind = intent.value("intent", "");
            if (kind == "done") {
                link_.send_user("Thanks for contacting us. Goodbye!");
                link_.finish("ok");
            }
            handle(kind, intent);
            text = link_.wait_user();
        }
    }

private:
    json route(const std::string& text) {
        auto reply = link_.llm({{"system", system_prompt(link_) + "\n" + kRoutePrompt}, {"user", text}});
        try {
            return parse_json_reply(reply);
        } catch (const std::exception&) {
            return {{"intent", "unclear"}};
        }
    }

    void handle(const std::string& kind, const json& in) {
        if (kind == "product_info") product_info(in);
        else if (kind == "policy_question") policy_question(in);
        else if (kind == "cancel_order") cancel_order(in);
        else if (kind == "return_items") return_items(in);
        else if (kind == "exchange_items") exchange_items(in);
        else if (kind == "change_address") change_address(in);
        else if (kind == "smalltalk") link_.send_user("Hello! I can help with orders, returns, exchanges and product questions.");
        else link_.send_user("Sorry, I did not understand. Could you rephrase your request?");
    }

    // Runs the gate when enabled. Returns false (and tells the user) on revise.
    bool gate(const std::string& tool, const json& args, const std::string& rationale) {
        if (!dc_) return true;
        auto verdict = double_check(link_, tool, args, rationale, kPolicy);
        if (verdict.approve) return true;
        link_.send_user("I'm sorry, I can't do that: " + verdict.reason + ".");
        return false;
    }

    void product_info(const json& in) {
        auto r = link_.tool("get_product_details", {{"product_id", in.value("product_id", "")}});
        if (!r["ok"].get<bool>()) {
            link_.send_user("I couldn't find that product: " + tool_error(r) + ".");
            return;
        }
        const auto& p = r["value"];
        std::string msg = p["name"].get<std::string>() + ":";
        for (const auto& [item_id, v] : p["variants"].items()) {
            std::string opts;
            for (const auto& [k, o] : v["options"].items()) opts += (opts.empty() ? "" : ", ") + k + " " + o.get<std::string>();
            msg += "\n- " + opts + ": " + money(v["price"].get<double>()) +
                   (v["stock"].get<int>() > 0 ? " (in stock)" : " (out of stock)");
        }
        link_.send_user(msg);
    }

    void policy_question(const json& in) {
        auto hits = link_.kb("retail_policy", in.value("query", ""), 1);
        if (hits.empty()) {
            link_.send_user("I could not find that in our policy documents.");
            return;
        }
        link_.send_user("From our policy: " + hits[0]["excerpt"].get<std::string>());
    }

    json order(const std::string& id) {
        auto r = link_.tool("get_order_details", {{"order_id", id}});
        if (!r["ok"].get<bool>()) {
            link_.send_user("I couldn't find order " + id + ": " + tool_error(r) + ".");
            return nullptr;
        }
        return r["value"];
    }

    void cancel_order(const json& in) {
        const std::string id = in.value("order_id", "");
        auto o = order(id);
        if (o.is_null()) return;
        double total = 0;
        for (const auto& it : o["items"]) total += it["price"].get<double>();
        const std::string reason = in.value("reason", "no longer needed");
        if (!confirm(link_, "Cancel order " + id + " (" + std::to_string(o["items"].size()) + " items, " + money(total) +
                                ") because it is " + reason + "?")) {
            link_.send_user("Okay, order " + id + " stays as it is.");
            return;
        }
        json args{{"order_id", id}, {"reason", reason}};
        if (!gate("cancel_pending_order", args, "customer confirmed the cancellation")) return;
        auto r = link_.tool("cancel_pending_order", args);
        if (!r["ok"].get<bool>()) {
            link_.send_user("I couldn't cancel order " + id + ": " + tool_error(r) + ".");
            return;
        }
        link_.send_user("Order " + id + " is cancelled; " + money(r["value"]["refund"].get<double>()) +
                        " will be refunded to the original payment method.");
    }

    bool owner_matches(const json& o, const std::string& email) {
        auto u = link_.tool("find_user_id_by_email", {{"email", email}});
        if (!u["ok"].get<bool>() || u["value"] != o["user_id"]) {
            link_.send_user("I couldn't verify that order " + o["order_id"].get<std::string>() + " belongs to " + email + ".");
            return false;
        }
        return true;
    }

    void return_items(const json& in) {
        const std::string id = in.value("order_id", "");
        const std::string email = in.value("email", "");
        const json items = in.value("item_ids", json::array());
        if (rt_) {
            if (!confirm(link_, "Return " + std::to_string(items.size()) + " item(s) from order " + id +
                                    " for a refund to the original payment method?")) {
                link_.send_user("Okay, nothing was returned.");
                return;
            }
            json args{{"order_id", id}, {"email", email}, {"item_ids", items}};
            if (!gate("process_return_request", args, "customer confirmed the return")) return;
            auto r = link_.tool("process_return_request", args);
            if (!r["ok"].get<bool>()) {
                link_.send_user("I couldn't process the return: " + tool_error(r) + ".");
                return;
            }
            link_.send_user("Your return for order " + id + " is accepted; " + money(r["value"]["refund"].get<double>()) +
                            " will be refunded.");
            return;
        }

        auto o = order(id);
        if (o.is_null() || !owner_matches(o, email)) return;
        std::string expr;
        std::multiset<std::string> wanted;
        for (const auto& i : items) wanted.insert(i.get<std::string>());
        for (const auto& line : o["items"]) {
            auto it = wanted.find(line["item_id"].get<std::string>());
            if (it == wanted.end()) continue;
            wanted.erase(it);
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.2f", line["price"].get<double>());
            expr += (expr.empty() ? "" : " + ") + std::string(buf);
        }
        if (!wanted.empty() || expr.empty()) {
            link_.send_user("Some of those items are not part of order " + id + ".");
            return;
        }
        auto sum = link_.tool("calculate", {{"expression", expr}});
        const double refund = sum["value"].get<double>();
        if (!confirm(link_, "Return " + std::to_string(items.size()) + " item(s) from order " + id + " for a refund of " +
                                money(refund) + "?")) {
            link_.send_user("Okay, nothing was returned.");
            return;
        }
        json args{{"order_id", id}, {"item_ids", items}, {"refund_amount", refund}, {"payment_method_id", o["payment_method_id"]}};
        if (!gate("return_order_items", args, "customer confirmed the return")) return;
        auto r = link_.tool("return_order_items", args);
        if (!r["ok"].get<bool>()) {
            link_.send_user("I couldn't process the return: " + tool_error(r) + ".");
            return;
        }
        link_.send_user("Your return for order " + id + " is accepted; " + money(refund) + " will be refunded.");
    }

    static std::string describe_options(const json& opts) {
        std::string s;
        for (const auto& [k, v] : opts.items()) s += (s.empty() ? "" : ", ") + k + " " + v.get<std::string>();
        return s;
    }

    void exchange_items(const json& in) {
        const std::string id = in.value("order_id", "");
        const std::string email = in.value("email", "");
        const json items = in.value("item_ids", json::array());
        const json wanted = in.value("new_options", json::array());
        if (items.size() != wanted.size() || items.empty()) {
            link_.send_user("Please tell me which items you want to exchange and the options you want instead.");
            return;
        }
        auto o = order(id);
        if (o.is_null()) return;

        std::string summary;
        for (std::size_t k = 0; k < wanted.size(); ++k) summary += (k ? "; " : "") + describe_options(wanted[k]);

        if (rt_) {
            if (!confirm(link_, "Exchange " + std::to_string(items.size()) + " item(s) in order " + id + " for: " + summary +
                                    "? Any price difference settles with the original payment method.")) {
                link_.send_user("Okay, nothing was exchanged.");
                return;
            }
            json args{{"order_id", id}, {"email", email}, {"item_ids", items}, {"new_options", wanted}};
            if (!gate("exchange_delivered_order_items", args, "customer confirmed the exchange")) return;
            auto r = link_.tool("exchange_delivered_order_items", args);
            if (!r["ok"].get<bool>()) {
                link_.send_user("I couldn't complete the exchange: " + tool_error(r) + ".");
                return;
            }
            link_.send_user("Your exchange for order " + id + " is confirmed; price difference " +
                            money(r["value"]["price_difference"].get<double>()) + ".");
            return;
        }

        if (!owner_matches(o, email)) return;
        if (o["status"] != "delivered") {
            link_.send_user("Order " + id + " is " + o["status"].get<std::string>() + "; only delivered orders can be exchanged.");
            return;
        }
        std::map<std::string, json> products;
        json new_ids = json::array();
        std::string old_expr, new_expr;
        for (std::size_t k = 0; k < items.size(); ++k) {
            json line;
            for (const auto& l : o["items"]) {
                if (l["item_id"] == items[k]) line = l;
            }
            if (line.is_null()) {
                link_.send_user("Item " + items[k].get<std::string>() + " is not part of order " + id + ".");
                return;
            }
            const std::string pid = line["product_id"];
            if (!products.count(pid)) {
                auto p = link_.tool("get_product_details", {{"product_id", pid}});
                products[pid] = p["value"];
            }
            auto pick = link_.llm({{"system", kPickPrompt},
                                   {"user", "Product: " + products[pid].dump() + "\nWanted options: " + wanted[k].dump()}});
            std::string item_id;
            try {
                item_id = parse_json_reply(pick).value("item_id", "");
            } catch (const std::exception&) {
            }
            if (!products[pid]["variants"].contains(item_id)) {
                link_.send_user("I couldn't find a " + describe_options(wanted[k]) + " option for that product.");
                return;
            }
            auto stock = link_.tool("check_item_stock", {{"item_id", item_id}});
            if (!stock["ok"].get<bool>() || stock["value"]["stock"].get<int>() <= 0) {
                link_.send_user("Sorry, item " + item_id + " (" + describe_options(wanted[k]) + ") is out of stock.");
                return;
            }
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.2f", products[pid]["variants"][item_id]["price"].get<double>());
            new_expr += (new_expr.empty() ? "" : " + ") + std::string(buf);
            std::snprintf(buf, sizeof(buf), "%.2f", line["price"].get<double>());
            old_expr += (old_expr.empty() ? "" : " + ") + std::string(buf);
            new_ids.push_back(item_id);
        }
        auto diff_r = link_.tool("calculate", {{"expression", "(" + new_expr + ") - (" + old_expr + ")"}});
        const double diff = diff_r["value"].get<double>();
        if (!confirm(link_, "Exchange " + std::to_string(items.size()) + " item(s) in order " + id + " for: " + summary +
                                "? Price difference " + money(diff) + " settles with the original payment method.")) {
            link_.send_user("Okay, nothing was exchanged.");
            return;
        }
        json args{{"order_id", id},
                  {"item_ids", items},
                  {"new_item_ids", new_ids},
                  {"price_difference", diff},
                  {"payment_method_id", o["payment_method_id"]}};
        if (!gate("exchange_order_items", args, "customer confirmed the exchange")) return;
        auto r = link_.tool("exchange_order_items", args);
        if (!r["ok"].get<bool>()) {
            link_.send_user("I couldn't complete the exchange: " + tool_error(r) + ".");
            return;
        }
        link_.send_user("Your exchange for order " + id + " is confirmed; price difference " + money(diff) + ".");
    }

    void change_address(const json& in) {
        const std::string email = in.value("email", "");
        const json address = in.value("address", json::object());
        auto u = link_.tool("find_user_id_by_email", {{"email", email}});
        if (!u["ok"].get<bool>()) {
            link_.send_user("I couldn't find an account for " + email + ".");
            return;
        }
        const std::string where = address.value("address1", "") + ", " + address.value("city", "") + " " + address.value("zip", "");
        if (!confirm(link_, "Set your default address to " + where + "?")) {
            link_.send_user("Okay, your address is unchanged.");
            return;
        }
        auto r = link_.tool("modify_user_address", {{"user_id", u["value"]}, {"address", address}});
        if (!r["ok"].get<bool>()) {
            link_.send_user("I couldn't update the address: " + tool_error(r) + ".");
            return;
        }
        link_.send_user("Your default address is now " + where + ".");
    }

    AgentLink& link_;
    bool dc_;
    bool rt_;
};

}  // namespace

int main() {
    auto link = AgentLink::connect();
    try {
        RetailAgent(link).run();
    } catch (const RemoteError& e) {
        link.log("error", e.what(), to_json(e.info));
        link.finish("error", {{"error", to_json(e.info)}});
    } catch (const std::exception& e) {
        link.log("error", e.what());
        link.finish("error", {{"error", e.what()}});
    }
    link.finish("ok");
}
