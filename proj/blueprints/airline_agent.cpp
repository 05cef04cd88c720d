// Airline customer-service workflow. Irreversible actions (cancel, flight
// or cabin changes) pass the double-check gate when it is enabled.

#include <algorithm>

#include "common.hpp"

using namespace bprun;
using namespace bprun::blueprint;
using nlohmann::json;

namespace {

const char* kRoutePrompt =
    "Classify the passenger's latest message. Reply with one JSON object with key \"intent\" "
    "(reservation_info, cancel_reservation, change_flights, change_cabin, baggage_policy, smalltalk, done) "
    "and the slots the intent needs.";

const char* kPolicy =
    "A reservation may be cancelled with a refund only when its fare is refundable; basic economy and other "
    "non-refundable fares are never refunded. Flight and cabin changes keep origin and destination, require an "
    "active reservation and settle the fare difference with a payment method of the reservation owner.";

std::string money2(double v) { return money(v); }

std::string itinerary(const json& flights) {
    std::string s;
    for (const auto& f : flights) {
        s += (s.empty() ? "" : "; ") + f["flight_number"].get<std::string>() + " " + f["origin"].get<std::string>() +
             "->" + f["destination"].get<std::string>() + " on " + f["date"].get<std::string>();
    }
    return s;
}

std::string number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

class AirlineAgent {
public:
    explicit AirlineAgent(AgentLink& link) : link_(link), dc_(link.toggle("dc_enabled")) {}

    void run() {
        std::string text = opening_message(link_);
        for (;;) {
            if (is_stop(text)) link_.finish("ok", {{"ended_by", "user"}});
            json in;
            try {
                in = parse_json_reply(link_.llm({{"system", system_prompt(link_) + "\n" + kRoutePrompt}, {"user", text}}));
            } catch (const std::invalid_argument&) {
                in = {{"intent", "unclear"}};
            }
            const std::string kind = in.value("intent", "");
            if (kind == "done") {
                link_.send_user("Thank you for flying with us. Goodbye!");
                link_.finish("ok");
            }
            if (kind == "reservation_info") info(in);
            else if (kind == "cancel_reservation") cancel(in);
            else if (kind == "change_flights") change_flights(in);
            else if (kind == "change_cabin") change_cabin(in);
            else if (kind == "baggage_policy") baggage(in);
            else if (kind == "smalltalk") link_.send_user("Hello! I can help with reservations, changes, cancellations and baggage.");
            else link_.send_user("Sorry, I did not understand. Could you rephrase your request?");
            text = link_.wait_user();
        }
    }

private:
    bool gate(const std::string& tool, const json& args, const std::string& rationale, const std::string& fallback) {
        if (!dc_) return true;
        auto verdict = double_check(link_, tool, args, rationale, kPolicy);
        if (verdict.approve) return true;
        link_.send_user("I'm sorry, I can't do that: " + verdict.reason + ". " + fallback);
        return false;
    }

    json reservation(const std::string& id) {
        auto r = link_.tool("get_reservation_details", {{"reservation_id", id}});
        if (!r["ok"].get<bool>()) {
            link_.send_user("I couldn't find reservation " + id + ": " + tool_error(r) + ".");
            return nullptr;
        }
        return r["value"];
    }

    static double paid(const json& r) {
        double total = 0;
        for (const auto& p : r["payment_history"]) {
            if (p["kind"] == "payment") total += p["amount"].get<double>();
            else total -= p["amount"].get<double>();
        }
        return total;
    }

    void info(const json& in) {
        auto r = reservation(in.value("reservation_id", ""));
        if (r.is_null()) return;
        link_.send_user("Reservation " + r["reservation_id"].get<std::string>() + ": " + itinerary(r["flights"]) + ", " +
                        r["cabin"].get<std::string>() + ", " + std::to_string(r["passengers"].size()) + " passenger(s), " +
                        (r["refundable"].get<bool>() ? "refundable" : "non-refundable") + ", status " +
                        r["status"].get<std::string>() + ".");
    }

    void cancel(const json& in) {
        const std::string id = in.value("reservation_id", "");
        auto r = reservation(id);
        if (r.is_null()) return;
        if (r["status"] != "active") {
            link_.send_user("Reservation " + id + " is already " + r["status"].get<std::string>() + ".");
            return;
        }
        if (!confirm(link_, "Cancel reservation " + id + " (" + itinerary(r["flights"]) + ")?")) {
            link_.send_user("Okay, reservation " + id + " stays active.");
            return;
        }
        json args{{"reservation_id", id}};
        if (!gate("cancel_reservation", args, "passenger asked to cancel: " + in.value("reason", std::string("unspecified")),
                  "I can help you change the flight instead.")) {
            return;
        }
        auto c = link_.tool("cancel_reservation", args);
        if (!c["ok"].get<bool>()) {
            link_.send_user("I couldn't cancel reservation " + id + ": " + tool_error(c) + ".");
            return;
        }
        link_.send_user("Reservation " + id + " is cancelled; " + money2(c["value"]["refund"].get<double>()) +
                        " will be refunded to the original payment method.");
    }

    bool owns_payment(const std::string& user_id, const std::string& pm) {
        auto u = link_.tool("get_user_details", {{"user_id", user_id}});
        return u["ok"].get<bool>() && u["value"]["payment_methods"].contains(pm);
    }

    // Picks the requested flight number if given, else the earliest departure.
    static json choose(const json& options, const std::string& wanted) {
        json best;
        for (const auto& f : options) {
            if (!wanted.empty()) {
                if (f["flight_number"] == wanted) return f;
                continue;
            }
            if (best.is_null() || f["depart_time"].get<std::string>() < best["depart_time"].get<std::string>()) best = f;
        }
        return best;
    }

    void apply_change(const std::string& id, const json& r, const std::string& cabin, const json& legs,
                      const std::string& pm, const std::string& old_expr, const std::string& new_expr) {
        const auto pax = std::to_string(r["passengers"].size());
        auto d = link_.tool("calculate", {{"expression", "(" + new_expr + ") * " + pax + " - (" + old_expr + ") * " + pax}});
        const double diff = d["value"].get<double>();
        json flights = json::array();
        for (const auto& l : legs) flights.push_back({{"flight_number", l["flight_number"]}, {"date", l["date"]}});
        if (!confirm(link_, "Change reservation " + id + " to " + itinerary(legs) + " in " + cabin + "? Fare difference " +
                                money2(diff) + " with " + pm + ".")) {
            link_.send_user("Okay, reservation " + id + " is unchanged.");
            return;
        }
        json args{{"reservation_id", id}, {"cabin", cabin}, {"flights", flights}, {"payment_method_id", pm}};
        if (!gate("update_reservation_flights", args, "passenger confirmed the change", "Is there anything else I can do?")) return;
        auto u = link_.tool("update_reservation_flights", args);
        if (!u["ok"].get<bool>()) {
            link_.send_user("I couldn't change reservation " + id + ": " + tool_error(u) + ".");
            return;
        }
        auto after = reservation(id);
        if (after.is_null()) return;
        link_.send_user("Done. Reservation " + id + " is now " + itinerary(after["flights"]) + " in " +
                        after["cabin"].get<std::string>() + "; total paid " + money2(paid(after)) + ".");
    }

    void change_flights(const json& in) {
        const std::string id = in.value("reservation_id", "");
        const std::string pm = in.value("payment_method_id", "");
        const json dates = in.value("new_dates", json::array());
        const json wanted = in.value("flight_numbers", json::array());
        if (!owns_payment(in.value("user_id", ""), pm)) {
            link_.send_user("That payment method is not on your profile.");
            return;
        }
        auto r = reservation(id);
        if (r.is_null()) return;
        if (dates.size() != r["flights"].size()) {
            link_.send_user("Please give me one new date per flight of the reservation.");
            return;
        }
        const std::string cabin = r["cabin"];
        json legs = json::array();
        std::string old_expr, new_expr;
        for (std::size_t k = 0; k < dates.size(); ++k) {
            const auto& leg = r["flights"][k];
            auto s = link_.tool("search_direct_flight",
                                {{"origin", leg["origin"]}, {"destination", leg["destination"]}, {"date", dates[k]}});
            const std::string want = k < wanted.size() ? wanted[k].get<std::string>() : "";
            auto f = s["ok"].get<bool>() ? choose(s["value"], want) : json();
            if (f.is_null() || !f["cabins"].contains(cabin)) {
                link_.send_user("There is no suitable direct flight from " + leg["origin"].get<std::string>() + " on " +
                                dates[k].get<std::string>() + ".");
                return;
            }
            old_expr += (old_expr.empty() ? "" : " + ") + number(leg["price"].get<double>());
            new_expr += (new_expr.empty() ? "" : " + ") + number(f["cabins"][cabin]["price"].get<double>());
            legs.push_back({{"flight_number", f["flight_number"]},
                            {"date", f["date"]},
                            {"origin", f["origin"]},
                            {"destination", f["destination"]}});
        }
        apply_change(id, r, cabin, legs, pm, old_expr, new_expr);
    }

    void change_cabin(const json& in) {
        const std::string id = in.value("reservation_id", "");
        const std::string cabin = in.value("cabin", "");
        const std::string pm = in.value("payment_method_id", "");
        auto r = reservation(id);
        if (r.is_null()) return;
        if (r["cabin"] == cabin) {
            link_.send_user("Reservation " + id + " is already in " + cabin + ".");
            return;
        }
        std::string old_expr, new_expr;
        json legs = json::array();
        for (const auto& leg : r["flights"]) {
            auto s = link_.tool("search_direct_flight",
                                {{"origin", leg["origin"]}, {"destination", leg["destination"]}, {"date", leg["date"]}});
            auto f = s["ok"].get<bool>() ? choose(s["value"], leg["flight_number"]) : json();
            if (f.is_null() || !f["cabins"].contains(cabin)) {
                link_.send_user("Flight " + leg["flight_number"].get<std::string>() + " has no " + cabin + " cabin.");
                return;
            }
            old_expr += (old_expr.empty() ? "" : " + ") + number(leg["price"].get<double>());
            new_expr += (new_expr.empty() ? "" : " + ") + number(f["cabins"][cabin]["price"].get<double>());
            legs.push_back(leg);
        }
        apply_change(id, r, cabin, legs, pm, old_expr, new_expr);
    }

    void baggage(const json& in) {
        auto hits = link_.kb("airline_policy", in.value("query", ""), 1);
        if (hits.empty()) {
            link_.send_user("I could not find that in our policy documents.");
            return;
        }
        link_.send_user("From our policy: " + hits[0]["excerpt"].get<std::string>());
    }

    AgentLink& link_;
    bool dc_;
};

}  // namespace

int main() {
    auto link = AgentLink::connect();
    try {
        AirlineAgent(link).run();
    } catch (const RemoteError& e) {
        link.log("error", e.what(), to_json(e.info));
        link.finish("error", {{"error", to_json(e.info)}});
    } catch (const std::exception& e) {
        link.log("error", e.what());
        link.finish("error", {{"error", e.what()}});
    }
    link.finish("ok");
}
