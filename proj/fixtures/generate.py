#!/usr/bin/env python3
"""Writes fixtures/bench/{retail,airline} and fixtures/agents.

expected_state_hash is left empty here; run `fixture_freeze fixtures/bench`
afterwards to fill it by replaying golden_actions through the engine's tools.
"""

import json
import os
import sys

ROOT = os.path.dirname(os.path.abspath(__file__))

YES = {"trigger": "(yes/no)", "utterance": "yes, please go ahead"}
BYE = {"utterance": "That's all, thanks."}


def dump(path, doc):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def write(path, text):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        f.write(text)


# ---- mock script building blocks -------------------------------------------

def step(content, match=None, only_if=None, tool_calls=None):
    s = {"response": {"message": {"role": "assistant", "content": content}}}
    if tool_calls:
        s["response"]["tool_calls"] = tool_calls
    if match:
        s["match"] = {"last_user_contains": match}
    if only_if:
        s["only_if"] = only_if
    return s


def route(match, **intent):
    return step(json.dumps(intent, sort_keys=True), match)


def done(match="That's all", only_if=None):
    return step(json.dumps({"intent": "done"}), match, only_if)


def verdict(text, only_if=None):
    cond = {"dc_enabled": True}
    cond.update(only_if or {})
    return step(text, "Proposed action", cond)


def pick(item_id):
    return step(json.dumps({"item_id": item_id}), "Wanted options", {"consolidated_tools": False})


def tc(name, **args):
    return {"name": name, "arguments": args}


def call(*calls):
    return ("call", list(calls))


def say(text):
    return ("say", text)


GOODBYE = say("You're welcome. Goodbye!")


def render(plan, variant):
    steps = []
    for kind, body in plan:
        if variant == "fc":
            if kind == "call":
                steps.append(step("", tool_calls=body))
            else:
                steps.append(step(body))
            continue
        actions = body if kind == "call" else [tc("respond", content=body)]
        for a in actions:
            text = "Action: " + json.dumps(a, sort_keys=True)
            if variant == "react":
                thought = ("I should reply to the customer." if a["name"] == "respond"
                           else "Next I need " + a["name"] + ".")
                text = "Thought: " + thought + "\n" + text
            steps.append(step(text))
    return {"steps": steps}


def task(task_id, description, script, golden, required, blueprint, fc, react=None, act=None,
         case_study=False, conflict=False):
    return {
        "task_id": task_id,
        "description": description,
        "user_script": script,
        "golden_actions": [{"name": n, "args": a} for n, a in golden],
        "required_outputs": required,
        "expected_state_hash": "",
        "case_study": case_study,
        "conflict": conflict,
        "_scripts": {
            "blueprint": {"steps": blueprint},
            "fc": render(fc, "fc"),
            "react": render(react or fc, "react"),
            "act": render(act or react or fc, "act"),
        },
    }


def emit_domain(name, state, policy, kb, agent, tasks):
    d = os.path.join(ROOT, "bench", name)
    dump(os.path.join(d, "state.json"), state)
    write(os.path.join(d, "policy.md"), policy)
    for doc, text in kb.items():
        write(os.path.join(d, "kb", doc + ".md"), text)
    dump(os.path.join(d, "agent.json"), agent)
    old = {}
    path = os.path.join(d, "tasks.json")
    if os.path.exists(path):
        with open(path) as f:
            old = {t["task_id"]: t["expected_state_hash"] for t in json.load(f)["tasks"]}
    out = []
    for t in tasks:
        for variant, script in t.pop("_scripts").items():
            dump(os.path.join(d, "scripts", "%s.%s.mockscript" % (t["task_id"], variant)), script)
        t["expected_state_hash"] = old.get(t["task_id"], "")
        out.append(t)
    dump(path, {"domain": name, "tasks": out})


# ---- retail ------------------------------------------------------------------

def variant(options, price, stock):
    return {"options": options, "price": price, "stock": stock}


PRODUCTS = {
    "p_tee": {"product_id": "p_tee", "name": "Cotton T-Shirt", "variants": {
        "i_tee_s_blue": variant({"size": "S", "color": "blue"}, 19.99, 4),
        "i_tee_m_blue": variant({"size": "M", "color": "blue"}, 19.99, 6),
        "i_tee_l_blue": variant({"size": "L", "color": "blue"}, 21.99, 3),
        "i_tee_m_red": variant({"size": "M", "color": "red"}, 19.99, 2),
        "i_tee_l_red": variant({"size": "L", "color": "red"}, 21.99, 0),
    }},
    "p_kettle": {"product_id": "p_kettle", "name": "Electric Kettle", "variants": {
        "i_kettle_1l_white": variant({"capacity": "1L", "color": "white"}, 34.5, 5),
        "i_kettle_1l_black": variant({"capacity": "1L", "color": "black"}, 36.0, 2),
        "i_kettle_17_steel": variant({"capacity": "1.7L", "color": "steel"}, 42.0, 3),
    }},
    "p_lamp": {"product_id": "p_lamp", "name": "Desk Lamp", "variants": {
        "i_lamp_white": variant({"color": "white"}, 28.0, 4),
        "i_lamp_black": variant({"color": "black"}, 28.0, 0),
    }},
    "p_mouse": {"product_id": "p_mouse", "name": "Wireless Mouse", "variants": {
        "i_mouse_grey": variant({"color": "grey"}, 24.99, 7),
        "i_mouse_black": variant({"color": "black"}, 24.99, 5),
    }},
}


def line(item_id):
    for pid, p in PRODUCTS.items():
        if item_id in p["variants"]:
            v = p["variants"][item_id]
            return {"item_id": item_id, "product_id": pid, "name": p["name"],
                    "options": v["options"], "price": v["price"]}
    raise KeyError(item_id)


def order(order_id, user, status, items, pm):
    lines = [line(i) for i in items]
    total = round(sum(l["price"] for l in lines), 2)
    return {"order_id": order_id, "user_id": user, "status": status, "items": lines,
            "payment_method_id": pm,
            "payment_history": [{"kind": "payment", "amount": total, "payment_method_id": pm}]}


MIA = "mia.chen@example.com"
NOAH = "noah.patel@example.com"
AVA = "ava.reyes@example.com"

RETAIL_STATE = {
    "users": {
        "u_mia": {"user_id": "u_mia", "name": "Mia Chen", "email": MIA,
                  "address": {"address1": "48 Elm St", "city": "Portland", "zip": "97205"},
                  "payment_methods": {"card_4242": {"type": "credit_card", "last4": "4242"},
                                      "gift_9001": {"type": "gift_card", "balance": 50.0}},
                  "orders": ["#W1001", "#W1002", "#W1008"]},
        "u_noah": {"user_id": "u_noah", "name": "Noah Patel", "email": NOAH,
                   "address": {"address1": "7 Birch Ave", "city": "Austin", "zip": "73301"},
                   "payment_methods": {"paypal_77": {"type": "paypal"}},
                   "orders": ["#W1003", "#W1004"]},
        "u_ava": {"user_id": "u_ava", "name": "Ava Reyes", "email": AVA,
                  "address": {"address1": "301 Lake Dr", "city": "Denver", "zip": "80202"},
                  "payment_methods": {"card_5151": {"type": "credit_card", "last4": "5151"}},
                  "orders": ["#W1005", "#W1006", "#W1009"]},
    },
    "products": PRODUCTS,
    "orders": {o["order_id"]: o for o in [
        order("#W1001", "u_mia", "delivered", ["i_tee_m_blue", "i_kettle_1l_white"], "card_4242"),
        order("#W1002", "u_mia", "pending", ["i_mouse_grey"], "card_4242"),
        order("#W1003", "u_noah", "delivered", ["i_lamp_white", "i_mouse_black"], "paypal_77"),
        order("#W1004", "u_noah", "pending", ["i_kettle_1l_black"], "paypal_77"),
        order("#W1005", "u_ava", "delivered", ["i_kettle_1l_black"], "card_5151"),
        order("#W1006", "u_ava", "delivered", ["i_tee_s_blue"], "card_5151"),
        order("#W1008", "u_mia", "delivered", ["i_mouse_grey", "i_tee_s_blue"], "card_4242"),
        order("#W1009", "u_ava", "delivered", ["i_mouse_grey"], "card_5151"),
    ]},
}

RETAIL_POLICY = """# Retail support policy

You help customers of an online store with orders, returns, exchanges, address changes and product questions.

- Verify the customer by email before changing an order.
- Only pending orders can be cancelled. Accepted reasons: "no longer needed" or "ordered by mistake".
- Only delivered orders can be returned or exchanged. Delivered items can be returned within 30 days of delivery.
- Exchanges keep the product and change its options. The price difference settles with the original payment method.
- Ask the customer to confirm every change with an explicit yes before making it.
"""

RETAIL_KB = {
    "returns": "# Return window\n\nDelivered items can be returned within 30 days of delivery. "
               "Refunds go to the original payment method within 5 business days.\n",
    "exchanges": "# Exchanges\n\nAn exchange swaps an item for another option of the same product, such as "
                 "size or color. Any price difference is charged or refunded on the original payment method.\n",
    "cancellations": "# Cancelling an order\n\nOrders can be cancelled while they are pending. Once an order "
                     "ships it can no longer be cancelled.\n",
    "shipping": "# Shipping\n\nStandard shipping takes 3 to 5 business days. Express shipping arrives in 2 "
                "business days.\n",
}

EXCHANGE_R05 = dict(order_id="#W1001", email=MIA, item_ids=["i_tee_m_blue", "i_kettle_1l_white"],
                    new_options=[{"size": "L", "color": "blue"}, {"capacity": "1.7L", "color": "steel"}])

RETAIL_TASKS = [
    task("R01", "Product question answered from the catalog.",
         [{"utterance": "Hi, what colors does the Wireless Mouse come in, and are they in stock?"}, BYE],
         [], ["black", "grey"],
         [route("Wireless Mouse", intent="product_info", product_id="p_mouse"), done()],
         [call(tc("get_product_details", product_id="p_mouse")),
          say("The Wireless Mouse comes in black ($24.99, in stock) and grey ($24.99, in stock)."), GOODBYE]),

    task("R02", "Policy question answered from the knowledge base.",
         [{"utterance": "What is your return window for delivered items?"}, BYE],
         [], ["30 days"],
         [route("return window", intent="policy_question", query="return window for delivered items"), done()],
         [say("Delivered items can be returned within 30 days of delivery, refunded to the original payment method."),
          GOODBYE]),

    task("R03", "Cancel a pending order.",
         [{"utterance": "Please cancel my order #W1002, I no longer need it."}, YES, BYE],
         [("cancel_pending_order", {"order_id": "#W1002", "reason": "no longer needed"})], ["cancelled"],
         [route("#W1002", intent="cancel_order", order_id="#W1002", reason="no longer needed"),
          verdict("APPROVE"), done()],
         [call(tc("get_order_details", order_id="#W1002")),
          say("Order #W1002 is pending with one Wireless Mouse ($24.99). Cancel it because you no longer need it? (yes/no)"),
          call(tc("cancel_pending_order", order_id="#W1002", reason="no longer needed")),
          say("Order #W1002 is cancelled; $24.99 will be refunded to your card."), GOODBYE]),

    task("R04", "Return one delivered item.",
         [{"utterance": "I'd like to return the desk lamp from order #W1003. My email is noah.patel@example.com."},
          YES, BYE],
         [("process_return_request", {"order_id": "#W1003", "email": NOAH, "item_ids": ["i_lamp_white"]})],
         ["refunded"],
         [route("#W1003", intent="return_items", order_id="#W1003", email=NOAH, item_ids=["i_lamp_white"]),
          verdict("APPROVE"), done()],
         [call(tc("find_user_id_by_email", email=NOAH)),
          call(tc("get_order_details", order_id="#W1003")),
          say("Return the Desk Lamp ($28.00) from order #W1003 with a refund to paypal_77? (yes/no)"),
          call(tc("return_order_items", order_id="#W1003", item_ids=["i_lamp_white"], refund_amount=28.0,
                  payment_method_id="paypal_77")),
          say("Your return is accepted; $28.00 will be refunded."), GOODBYE],
         act=[call(tc("return_order_items", order_id="#W1003", item_ids=["i_lamp_white"], refund_amount=28.0,
                      payment_method_id="paypal_77")),
              say("Return the Desk Lamp from order #W1003? (yes/no)"),
              say("Your return is accepted; $28.00 will be refunded."), GOODBYE]),

    task("R05", "Exchange two delivered items for other options.",
         [{"utterance": "For order #W1001 I want the T-shirt in size L blue instead of M, and the 1.7L steel "
                        "kettle instead of the white 1L one. Email mia.chen@example.com."}, YES, BYE],
         [("exchange_delivered_order_items", EXCHANGE_R05)], ["confirmed"],
         [route("#W1001", intent="exchange_items", **EXCHANGE_R05),
          pick("i_tee_l_blue"), pick("i_kettle_17_steel"), verdict("APPROVE"), done()],
         [call(tc("find_user_id_by_email", email=MIA)),
          call(tc("get_user_details", user_id="u_mia")),
          call(tc("get_order_details", order_id="#W1001")),
          call(tc("get_product_details", product_id="p_tee"), tc("get_product_details", product_id="p_kettle")),
          call(tc("check_item_stock", item_id="i_tee_l_blue"), tc("check_item_stock", item_id="i_kettle_17_steel")),
          call(tc("get_item_price", item_id="i_tee_l_blue"), tc("get_item_price", item_id="i_kettle_17_steel")),
          call(tc("calculate", expression="(21.99 + 42.00) - (19.99 + 34.50)")),
          say("Exchange the T-shirt for size L blue and the kettle for the 1.7L steel one? The difference of "
              "$9.50 goes on card_4242. (yes/no)"),
          call(tc("exchange_order_items", order_id="#W1001", item_ids=["i_tee_m_blue", "i_kettle_1l_white"],
                  new_item_ids=["i_tee_l_blue", "i_kettle_17_steel"], price_difference=9.5,
                  payment_method_id="card_4242")),
          say("Your exchange for order #W1001 is confirmed; $9.50 was charged to card_4242."), GOODBYE],
         react=[call(tc("find_user_id_by_email", email=MIA)),
                call(tc("get_order_details", order_id="#W1001")),
                call(tc("get_product_details", product_id="p_tee")),
                call(tc("get_product_details", product_id="p_kettle")),
                call(tc("calculate", expression="42.00 - 34.50")),
                say("Exchange both items? The difference is $7.50 on card_4242. (yes/no)"),
                call(tc("exchange_order_items", order_id="#W1001", item_ids=["i_tee_m_blue", "i_kettle_1l_white"],
                        new_item_ids=["i_tee_l_blue", "i_kettle_17_steel"], price_difference=7.5,
                        payment_method_id="card_4242")),
                say("Your exchange for order #W1001 is confirmed."), GOODBYE],
         case_study=True),

    task("R06", "Return where the requested item is easy to confuse.",
         [{"utterance": "I want to return the wireless mouse from order #W1008, email mia.chen@example.com."},
          YES, BYE],
         [("process_return_request", {"order_id": "#W1008", "email": MIA, "item_ids": ["i_mouse_grey"]})],
         ["refunded"],
         [route("#W1008", intent="return_items", order_id="#W1008", email=MIA, item_ids=["i_tee_s_blue"]),
          verdict("APPROVE"), done()],
         [call(tc("find_user_id_by_email", email=MIA)),
          call(tc("get_order_details", order_id="#W1008")),
          say("Return item i_tee_s_blue ($19.99) from order #W1008 to card_4242? (yes/no)"),
          call(tc("return_order_items", order_id="#W1008", item_ids=["i_tee_s_blue"], refund_amount=19.99,
                  payment_method_id="card_4242")),
          say("Your return is accepted; $19.99 will be refunded."), GOODBYE]),

    task("R07", "Exchange for an option that is out of stock.",
         [{"utterance": "Can I exchange the T-shirt from order #W1006 for size L in red? Email ava.reyes@example.com."},
          YES, BYE],
         [], ["out of stock"],
         [route("#W1006", intent="exchange_items", order_id="#W1006", email=AVA, item_ids=["i_tee_s_blue"],
                new_options=[{"size": "L", "color": "red"}]),
          pick("i_tee_l_red"),
          done("proceed", {"consolidated_tools": False}),
          verdict("APPROVE", {"consolidated_tools": True}),
          done("That's all", {"consolidated_tools": True})],
         [call(tc("find_user_id_by_email", email=AVA)),
          call(tc("get_order_details", order_id="#W1006")),
          call(tc("get_product_details", product_id="p_tee")),
          say("Exchange the T-shirt in order #W1006 for size L red? The difference of $2.00 goes on card_5151. (yes/no)"),
          call(tc("exchange_order_items", order_id="#W1006", item_ids=["i_tee_s_blue"], new_item_ids=["i_tee_l_red"],
                  price_difference=2.0, payment_method_id="card_5151")),
          say("Your exchange for order #W1006 is confirmed."), GOODBYE]),

    task("R08", "Change the default address.",
         [{"utterance": "Please update my default address to 12 Harbor Rd, Portland 97201. Email mia.chen@example.com."},
          YES, BYE],
         [("modify_user_address", {"user_id": "u_mia",
                                   "address": {"address1": "12 Harbor Rd", "city": "Portland", "zip": "97201"}})],
         ["12 Harbor Rd"],
         [route("12 Harbor Rd", intent="change_address", email=MIA,
                address={"address1": "12 Harbor Rd", "city": "Portland", "zip": "97201"}),
          done()],
         [call(tc("find_user_id_by_email", email=MIA)),
          say("Set your default address to 12 Harbor Rd, Portland 97201? (yes/no)"),
          call(tc("modify_user_address", user_id="u_mia",
                  address={"address1": "12 Harbor Rd", "city": "Portland", "zip": "97201"})),
          say("Your default address is now 12 Harbor Rd, Portland 97201."), GOODBYE],
         act=[call(tc("find_user_id_by_email", email=MIA)),
              say("Set your default address to 12 Harbor Rd, Portland 97210? (yes/no)"),
              call(tc("modify_user_address", user_id="u_mia",
                      address={"address1": "12 Harbor Rd", "city": "Portland", "zip": "97210"})),
              say("Your default address is now 12 Harbor Rd, Portland 97210."), GOODBYE]),

    task("R09", "Greeting with no request.",
         [{"utterance": "Hello there!"}, BYE],
         [], ["I can help with"],
         [route("Hello there", intent="smalltalk"), done()],
         [say("Hello! I can help with orders, returns, exchanges and product questions."), GOODBYE]),

    task("R10", "Return requested on an order that has not been delivered.",
         [{"utterance": "I want to return the kettle from order #W1004, email noah.patel@example.com."}, YES, BYE],
         [], ["pending"],
         [route("#W1004", intent="return_items", order_id="#W1004", email=NOAH, item_ids=["i_kettle_1l_black"]),
          verdict("REVISE: order #W1004 is still pending and only delivered orders can be returned"), done()],
         [call(tc("find_user_id_by_email", email=NOAH)),
          call(tc("get_order_details", order_id="#W1004")),
          say("Return the Electric Kettle from order #W1004 for $36.00 to paypal_77? (yes/no)"),
          call(tc("return_order_items", order_id="#W1004", item_ids=["i_kettle_1l_black"], refund_amount=36.0,
                  payment_method_id="paypal_77")),
          say("Your return is accepted; $36.00 will be refunded."), GOODBYE]),

    task("R11", "Cancellation requested on a delivered order.",
         [{"utterance": "Cancel order #W1005 please, I ordered it by mistake."}, YES, BYE],
         [], ["only pending orders can be cancelled"],
         [route("#W1005", intent="cancel_order", order_id="#W1005", reason="ordered by mistake"),
          verdict("REVISE: order #W1005 was already delivered, only pending orders can be cancelled"), done()],
         [call(tc("get_order_details", order_id="#W1005")),
          say("Cancel order #W1005 (Electric Kettle, $36.00) because it was ordered by mistake? (yes/no)"),
          call(tc("cancel_pending_order", order_id="#W1005", reason="ordered by mistake")),
          say("I couldn't cancel order #W1005: it was delivered, and only pending orders can be cancelled."),
          GOODBYE]),

    task("R12", "Exchange that needs the right variant picked.",
         [{"utterance": "I'd like to exchange the grey wireless mouse in order #W1009 for the black one. "
                        "Email ava.reyes@example.com."}, YES, BYE],
         [("exchange_delivered_order_items", {"order_id": "#W1009", "email": AVA, "item_ids": ["i_mouse_grey"],
                                              "new_options": [{"color": "black"}]})],
         ["confirmed"],
         [route("#W1009", intent="exchange_items", order_id="#W1009", email=AVA, item_ids=["i_mouse_grey"],
                new_options=[{"color": "black"}]),
          pick("i_mouse_grey"), verdict("APPROVE"), done()],
         [call(tc("find_user_id_by_email", email=AVA)),
          call(tc("get_order_details", order_id="#W1009")),
          call(tc("get_product_details", product_id="p_mouse")),
          say("Exchange the mouse in order #W1009 for the black one at no extra cost? (yes/no)"),
          call(tc("exchange_order_items", order_id="#W1009", item_ids=["i_mouse_grey"], new_item_ids=["i_mouse_grey"],
                  price_difference=0.0, payment_method_id="card_5151")),
          say("Your exchange for order #W1009 is confirmed."), GOODBYE]),
]


# ---- airline -----------------------------------------------------------------

def flight(number, date, origin, dest, depart, **cabins):
    return {"flight_number": number, "date": date, "origin": origin, "destination": dest, "depart_time": depart,
            "cabins": {c: {"price": p, "seats": s} for c, (p, s) in cabins.items()}}


FLIGHTS = [
    flight("HA100", "2026-11-10", "LAX", "SFO", "07:30", economy=(120.0, 30), business=(280.0, 6)),
    flight("B6200", "2026-11-12", "JFK", "BOS", "09:00", economy=(150.0, 20), business=(320.0, 4)),
    flight("AS400", "2026-11-18", "SEA", "DEN", "10:05", economy=(140.0, 25)),
    flight("AA210", "2026-11-20", "ORD", "MIA", "08:00", economy=(130.0, 40), business=(390.0, 8)),
    flight("AA211", "2026-11-27", "MIA", "ORD", "09:15", economy=(130.0, 40), business=(390.0, 8)),
    flight("AA210", "2026-11-21", "ORD", "MIA", "08:00", economy=(139.0, 12)),
    flight("AA214", "2026-11-21", "ORD", "MIA", "17:30", economy=(119.0, 9)),
    flight("AA211", "2026-11-28", "MIA", "ORD", "09:15", economy=(149.0, 10)),
    flight("AA215", "2026-11-28", "MIA", "ORD", "19:00", economy=(129.0, 10)),
    flight("DL300", "2026-12-02", "BOS", "ATL", "08:10", economy=(170.0, 15)),
    flight("DL300", "2026-12-03", "BOS", "ATL", "08:10", economy=(180.0, 15)),
    flight("DL304", "2026-12-03", "BOS", "ATL", "18:40", economy=(160.0, 15)),
    flight("UA610", "2026-11-25", "DEN", "PHX", "06:45", basic_economy=(89.0, 20), economy=(129.0, 20)),
    flight("UA500", "2026-11-15", "SEA", "DEN", "13:20", economy=(130.0, 22), business=(310.0, 5)),
]
FLIGHT_BY_KEY = {f["flight_number"] + "_" + f["date"]: f for f in FLIGHTS}


def leg(number, date, cabin):
    f = FLIGHT_BY_KEY[number + "_" + date]
    return {"flight_number": number, "date": date, "origin": f["origin"], "destination": f["destination"],
            "price": f["cabins"][cabin]["price"]}


def reservation(rid, user, legs, cabin, pax, refundable, pm):
    flights = [leg(n, d, cabin) for n, d in legs]
    total = sum(f["price"] for f in flights) * len(pax)
    return {"reservation_id": rid, "user_id": user, "flights": flights, "cabin": cabin,
            "passengers": [{"name": p} for p in pax], "refundable": refundable, "status": "active",
            "payment_history": [{"kind": "payment", "amount": total, "payment_method_id": pm}]}


AIRLINE_STATE = {
    "users": {
        "u_liam": {"user_id": "u_liam", "name": "Liam Novak",
                   "payment_methods": {"card_1111": {"type": "credit_card", "last4": "1111"},
                                       "gift_22": {"type": "gift_card", "balance": 40.0}},
                   "reservations": ["RES101", "RES104", "RES106"]},
        "u_emma": {"user_id": "u_emma", "name": "Emma Laurent",
                   "payment_methods": {"card_2222": {"type": "credit_card", "last4": "2222"}},
                   "reservations": ["RES102", "RES105"]},
        "u_olivia": {"user_id": "u_olivia", "name": "Olivia Grant",
                     "payment_methods": {"card_3333": {"type": "credit_card", "last4": "3333"},
                                         "cert_44": {"type": "travel_certificate", "balance": 200.0}},
                     "reservations": ["RES103", "RES108"]},
    },
    "flights": FLIGHT_BY_KEY,
    "reservations": {r["reservation_id"]: r for r in [
        reservation("RES101", "u_liam", [("HA100", "2026-11-10")], "economy", ["Liam Novak"], True, "card_1111"),
        reservation("RES102", "u_emma", [("B6200", "2026-11-12")], "economy", ["Emma Laurent", "Paul Laurent"],
                    True, "card_2222"),
        reservation("RES103", "u_olivia", [("AS400", "2026-11-18")], "economy", ["Olivia Grant"], False, "card_3333"),
        reservation("RES104", "u_liam", [("AA210", "2026-11-20"), ("AA211", "2026-11-27")], "economy",
                    ["Liam Novak"], False, "card_1111"),
        reservation("RES105", "u_emma", [("DL300", "2026-12-02")], "economy", ["Emma Laurent"], False, "card_2222"),
        reservation("RES106", "u_liam", [("UA610", "2026-11-25")], "basic_economy", ["Liam Novak"], False, "gift_22"),
        reservation("RES108", "u_olivia", [("UA500", "2026-11-15")], "economy", ["Olivia Grant"], False,
                    "card_3333"),
    ]},
}

AIRLINE_POLICY = """# Airline support policy

You help passengers with reservations, flight changes, cabin changes, cancellations and baggage questions.

- Only refundable reservations may be cancelled with a refund. Basic economy and other non-refundable fares are never refunded.
- Flight changes keep origin and destination. The fare difference is settled with a payment method on the passenger's profile.
- Economy fares include one checked bag up to 23 kg. Business fares include two.
- Ask the passenger to confirm every change with an explicit yes before making it.
"""

AIRLINE_KB = {
    "baggage": "# Checked baggage\n\nEconomy fares include one checked bag up to 23 kg. Business fares include "
               "two checked bags up to 32 kg each. Extra bags cost $60 each.\n",
    "refunds": "# Refunds\n\nRefundable fares are refunded to the original payment method. Basic economy fares "
               "are never refunded.\n",
    "changes": "# Changing flights\n\nFlights can be moved to another date on the same route. The fare difference "
               "is charged or refunded.\n",
}

A04_CHANGE = dict(reservation_id="RES104", user_id="u_liam", payment_method_id="card_1111",
                  new_dates=["2026-11-21", "2026-11-28"], flight_numbers=["AA210", "AA211"])
A04_UPDATE = {"reservation_id": "RES104", "cabin": "economy", "payment_method_id": "card_1111",
              "flights": [{"flight_number": "AA210", "date": "2026-11-21"},
                          {"flight_number": "AA211", "date": "2026-11-28"}]}

AIRLINE_TASKS = [
    task("A01", "Reservation lookup.",
         [{"utterance": "What's on my reservation RES101?"}, BYE],
         [], ["HA100"],
         [route("RES101", intent="reservation_info", reservation_id="RES101"), done()],
         [call(tc("get_reservation_details", reservation_id="RES101")),
          say("Reservation RES101 is flight HA100 from LAX to SFO on 2026-11-10 in economy; it is refundable and active."),
          GOODBYE]),

    task("A02", "Cancel a refundable reservation.",
         [{"utterance": "Please cancel reservation RES102, our plans changed."}, YES, BYE],
         [("cancel_reservation", {"reservation_id": "RES102"})], ["cancelled"],
         [route("RES102", intent="cancel_reservation", reservation_id="RES102", reason="change of plans"),
          verdict("APPROVE"), done()],
         [call(tc("get_reservation_details", reservation_id="RES102")),
          say("RES102 is refundable. Cancel it and refund $300.00 to card_2222? (yes/no)"),
          call(tc("cancel_reservation", reservation_id="RES102")),
          say("Reservation RES102 is cancelled; $300.00 will be refunded."), GOODBYE],
         act=[call(tc("get_reservation_details", reservation_id="RES102")),
              say("Cancel reservation RES102? (yes/no)"),
              call(tc("cancel_reservation", reservation_id="RES101")),
              say("Reservation RES102 is cancelled."), GOODBYE]),

    task("A03", "Cancellation of a non-refundable fare.",
         [{"utterance": "Cancel RES103 and refund me, I'm no longer travelling."}, YES, BYE],
         [], ["non-refundable"],
         [route("RES103", intent="cancel_reservation", reservation_id="RES103", reason="no longer travelling"),
          verdict("REVISE: reservation RES103 has a non-refundable fare and cannot be refunded"), done()],
         [call(tc("get_reservation_details", reservation_id="RES103")),
          say("Cancel reservation RES103 (AS400 SEA->DEN on 2026-11-18)? (yes/no)"),
          call(tc("cancel_reservation", reservation_id="RES103")),
          say("Reservation RES103 is cancelled and $140.00 will be refunded."), GOODBYE],
         conflict=True),

    task("A04", "Move both legs of a round trip by one day.",
         [{"utterance": "I need to move both flights of RES104 by one day, to 2026-11-21 and 2026-11-28, same "
                        "flight numbers. I'm u_liam; please use card_1111."}, YES, BYE],
         [("update_reservation_flights", A04_UPDATE)], ["AA210", "AA211", "$288.00"],
         [route("RES104", intent="change_flights", **A04_CHANGE), verdict("APPROVE"), done()],
         [call(tc("get_reservation_details", reservation_id="RES104")),
          call(tc("get_user_details", user_id="u_liam")),
          call(tc("search_direct_flight", origin="ORD", destination="MIA", date="2026-11-21")),
          call(tc("search_direct_flight", origin="MIA", destination="ORD", date="2026-11-28")),
          call(tc("calculate", expression="130 + 130")),
          call(tc("calculate", expression="139 + 149")),
          call(tc("calculate", expression="288 - 260")),
          say("Move RES104 to AA210 on 2026-11-21 and AA211 on 2026-11-28 for $28.00 more on card_1111? (yes/no)"),
          call(tc("update_reservation_flights", **A04_UPDATE)),
          call(tc("get_reservation_details", reservation_id="RES104")),
          say("Done. RES104 is now AA210 on 2026-11-21 and AA211 on 2026-11-28; total paid $288.00."), GOODBYE],
         react=[call(tc("get_reservation_details", reservation_id="RES104")),
                call(tc("search_direct_flight", origin="ORD", destination="MIA", date="2026-11-21")),
                call(tc("search_direct_flight", origin="MIA", destination="ORD", date="2026-11-28")),
                say("The cheapest option is AA214 on 2026-11-21 and AA211 on 2026-11-28. Shall I switch? (yes/no)"),
                call(tc("update_reservation_flights", reservation_id="RES104", cabin="economy",
                        payment_method_id="card_1111",
                        flights=[{"flight_number": "AA214", "date": "2026-11-21"},
                                 {"flight_number": "AA211", "date": "2026-11-28"}])),
                say("Done. RES104 is now AA214 and AA211."), GOODBYE],
         case_study=True),

    task("A05", "Move a one-way trip to the morning flight of another day.",
         [{"utterance": "Please move RES105 to the morning flight on 2026-12-03. I'm u_emma, charge card_2222."},
          YES, BYE],
         [("update_reservation_flights", {"reservation_id": "RES105", "cabin": "economy",
                                          "payment_method_id": "card_2222",
                                          "flights": [{"flight_number": "DL300", "date": "2026-12-03"}]})],
         ["DL300"],
         [route("RES105", intent="change_flights", reservation_id="RES105", user_id="u_emma",
                payment_method_id="card_2222", new_dates=["2026-12-03"]),
          verdict("APPROVE"), done()],
         [call(tc("get_user_details", user_id="u_emma")),
          call(tc("get_reservation_details", reservation_id="RES105")),
          call(tc("search_direct_flight", origin="BOS", destination="ATL", date="2026-12-03")),
          call(tc("calculate", expression="160 - 170")),
          say("DL304 on 2026-12-03 is $10.00 cheaper. Move RES105 to it? (yes/no)"),
          call(tc("update_reservation_flights", reservation_id="RES105", cabin="economy", payment_method_id="card_2222",
                  flights=[{"flight_number": "DL304", "date": "2026-12-03"}])),
          say("Done. RES105 is now DL304 on 2026-12-03."), GOODBYE]),

    task("A06", "Cancellation of a basic economy fare.",
         [{"utterance": "I want to cancel RES106 and get my money back."}, YES, BYE],
         [], ["basic economy"],
         [route("RES106", intent="cancel_reservation", reservation_id="RES106", reason="wants a refund"),
          verdict("REVISE: reservation RES106 is basic economy, which is never refunded"), done()],
         [call(tc("get_reservation_details", reservation_id="RES106")),
          say("Cancel reservation RES106 (UA610 DEN->PHX on 2026-11-25)? (yes/no)"),
          call(tc("cancel_reservation", reservation_id="RES106")),
          say("Reservation RES106 is cancelled."), GOODBYE],
         conflict=True),

    task("A07", "Baggage allowance question.",
         [{"utterance": "How many checked bags can I bring in economy, and how heavy?"}, BYE],
         [], ["23 kg"],
         [route("checked bags", intent="baggage_policy", query="checked bag allowance economy"), done()],
         [say("Economy fares include one checked bag up to 23 kg."), GOODBYE]),

    task("A08", "Cabin upgrade paid with a named card.",
         [{"utterance": "Please upgrade RES108 to business class and charge my card_3333."}, YES, BYE],
         [("update_reservation_flights", {"reservation_id": "RES108", "cabin": "business",
                                          "payment_method_id": "card_3333",
                                          "flights": [{"flight_number": "UA500", "date": "2026-11-15"}]})],
         ["business"],
         [route("RES108", intent="change_cabin", reservation_id="RES108", cabin="business",
                payment_method_id="cert_44"),
          verdict("APPROVE"), done()],
         [call(tc("get_reservation_details", reservation_id="RES108")),
          call(tc("search_direct_flight", origin="SEA", destination="DEN", date="2026-11-15")),
          call(tc("calculate", expression="310 - 130")),
          say("Upgrade RES108 to business for $180.00 using your travel certificate cert_44? (yes/no)"),
          call(tc("update_reservation_flights", reservation_id="RES108", cabin="business", payment_method_id="cert_44",
                  flights=[{"flight_number": "UA500", "date": "2026-11-15"}])),
          say("Done. RES108 is now in business."), GOODBYE]),
]


def bench_agent(domain, kb_id):
    return {
        "agent_id": domain + "-bench",
        "agent_token": domain + "-bench-token",
        "system_prompt_file": "policy.md",
        "blueprint": {"dir": domain + "_agent", "entry_file": domain + "_agent", "runtime": "native"},
        "model": {"provider": "mock", "model": "mock-" + domain},
        "knowledge_bases": [{"id": kb_id, "dir": "kb"}],
        "tools": {"domain": domain, "state": "state.json"},
        "limits": {"cpu_seconds": 10, "memory_bytes": 268435456, "wall_clock_seconds": 30,
                   "max_protocol_frames": 2000, "max_stdout_bytes": 65536},
        "retry": {"max_retries": 2, "backoff_base_ms": 50},
    }


# ---- deployable demo agents ----------------------------------------------------

OPS_STATE = {
    "services": {
        "checkout": {"pid": 4242, "gc": {"s0": 0.0, "s1": 12.5, "eden": 100.0, "old": 98.7, "meta": 95.1,
                                         "ygc": 412, "fgc": 37},
                     "dumps": [],
                     "heap_profile": {"retained_mb": 1840,
                                      "top_dominators": [
                                          {"class": "com.shop.cache.SessionCache", "retained_mb": 1310},
                                          {"class": "byte[]", "retained_mb": 220}]}},
        "search": {"pid": 5151, "gc": {"s0": 3.1, "s1": 0.0, "eden": 41.0, "old": 37.2, "meta": 90.3,
                                       "ygc": 88, "fgc": 1},
                   "dumps": [], "heap_profile": {}},
    }
}

OPS_SCRIPT = {"steps": [
    step(json.dumps({"pid": 4242}), "OutOfMemoryError"),
    step("SessionCache retains 1310 MB of the 1840 MB heap, so sessions are never evicted. "
         "Add an eviction bound to SessionCache and restart checkout.", "retained_mb"),
]}

RETAIL_DEMO_SCRIPT = {"steps": [
    route("Wireless Mouse", intent="product_info", product_id="p_mouse"),
    route("#W1002", intent="cancel_order", order_id="#W1002", reason="no longer needed"),
    verdict("APPROVE"),
    done(),
]}


def main():
    emit_domain("retail", RETAIL_STATE, RETAIL_POLICY, RETAIL_KB, bench_agent("retail", "retail_policy"), RETAIL_TASKS)
    emit_domain("airline", AIRLINE_STATE, AIRLINE_POLICY, AIRLINE_KB, bench_agent("airline", "airline_policy"),
                AIRLINE_TASKS)

    agents = os.path.join(ROOT, "agents")
    dump(os.path.join(agents, "ops", "state.json"), OPS_STATE)
    dump(os.path.join(agents, "ops", "oom.mockscript"), OPS_SCRIPT)
    write(os.path.join(agents, "ops", "prompt.md"),
          "You are an on-call assistant for JVM services. Follow the triage procedure exactly.\n")
    dump(os.path.join(agents, "ops", "agent.json"), {
        "agent_id": "oom-triage",
        "agent_token": "ops-token",
        "system_prompt_file": "prompt.md",
        "blueprint": {"dir": "oom_triage", "entry_file": "oom_triage", "runtime": "native"},
        "model": {"provider": "mock", "script": "oom.mockscript", "model": "mock-ops"},
        "tools": {"domain": "ops", "state": "state.json"},
        "limits": {"cpu_seconds": 10, "memory_bytes": 268435456, "wall_clock_seconds": 60},
    })
    dump(os.path.join(agents, "retail", "demo.mockscript"), RETAIL_DEMO_SCRIPT)
    dump(os.path.join(agents, "retail", "agent.json"), {
        "agent_id": "retail-demo",
        "agent_token": "retail-token",
        "system_prompt_file": "../../bench/retail/policy.md",
        "blueprint": {"dir": "retail_agent", "entry_file": "retail_agent", "runtime": "native"},
        "model": {"provider": "mock", "script": "demo.mockscript", "model": "mock-retail"},
        "knowledge_bases": [{"id": "retail_policy", "dir": "../../bench/retail/kb"}],
        "tools": {"domain": "retail", "state": "../../bench/retail/state.json"},
        "deny_users": ["blocked-user"],
    })
    dump(os.path.join(agents, "registry.json"), {"agents": ["ops/agent.json", "retail/agent.json"]})
    return 0


if __name__ == "__main__":
    sys.exit(main())
