#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/socket.h>

#include <random>
#include <thread>

#include "protocol/channel.hpp"
#include "protocol/frame.hpp"
#include "protocol/messages.hpp"
#include "support.hpp"

using namespace bprun;
using namespace bprun::test;

namespace {

std::vector<std::uint8_t> from_hex(const std::string& hex) {
    std::vector<std::uint8_t> out;
    for (std::size_t i = 0; i + 1 < hex.size(); i += 2) out.push_back(std::stoi(hex.substr(i, 2), nullptr, 16));
    return out;
}

std::vector<std::uint8_t> raw_frame(const std::string& body) {
    std::vector<std::uint8_t> out{static_cast<std::uint8_t>(body.size() >> 24), static_cast<std::uint8_t>(body.size() >> 16),
                                  static_cast<std::uint8_t>(body.size() >> 8), static_cast<std::uint8_t>(body.size())};
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

}  // namespace

TEST_CASE("finish frame encodes to a fixed 50-byte body") {
    const auto bytes = encode_frame(Frame::finish(1, {{"status", "ok"}}));
    REQUIRE(bytes.size() == 54);
    CHECK(bytes[0] == 0);
    CHECK(bytes[3] == 50);
    const std::string body(bytes.begin() + 4, bytes.end());
    CHECK(body == R"({"id":1,"kind":"finish","payload":{"status":"ok"}})");
}

TEST_CASE("encoding matches the reference codec byte for byte") {
    const auto golden = json::parse(read_file(source_dir() / "tests/fixtures/frames/golden.json"));
    REQUIRE(golden.size() >= 8);
    for (const auto& g : golden) {
        CAPTURE(g["name"].get<std::string>());
        const Frame f = frame_from_json(g["frame"]);
        const auto want = from_hex(g["hex"]);
        CHECK(encode_frame(f) == want);
        const auto back = decode_frame(want);
        CHECK(back.consumed == want.size());
        CHECK(back.frame == f);
        CHECK(frame_to_json(back.frame) == g["frame"]);
    }
}

TEST_CASE("round trip preserves every frame kind") {
    const std::vector<Frame> frames = {
        Frame::request(7, ops::tool_call, {{"name", "x"}, {"args", {{"a", 1}}}}),
        Frame::success(7, {{"value", json::array({1, "two", nullptr})}}),
        Frame::failure(8, ErrorInfo{ErrorClass::transient, "later"}),
        Frame::failure(9, ErrorInfo{ErrorClass::quota, "cpu"}),
        Frame::finish(10, {{"status", "error"}}),
        Frame::event(ops::log, {{"level", "info"}, {"message", "ünïcödé"}}),
    };
    for (const auto& f : frames) {
        const auto bytes = encode_frame(f);
        CHECK(decode_frame(bytes).frame == f);
    }
}

TEST_CASE("decoder waits for complete frames and consumes exactly one") {
    auto a = encode_frame(Frame::request(1, ops::user_wait, json::object()));
    auto b = encode_frame(Frame::finish(2, {{"status", "ok"}}));
    std::vector<std::uint8_t> both = a;
    both.insert(both.end(), b.begin(), b.end());
    for (std::size_t cut = 0; cut < a.size(); ++cut) {
        CHECK_FALSE(try_decode_frame(std::span(both.data(), cut)).has_value());
    }
    auto first = try_decode_frame(both);
    REQUIRE(first);
    CHECK(first->consumed == a.size());
    auto second = try_decode_frame(std::span(both).subspan(first->consumed));
    REQUIRE(second);
    CHECK(second->frame.kind == FrameKind::finish);
}

TEST_CASE("malformed input raises protocol errors") {
    CHECK_THROWS_AS(decode_frame(std::vector<std::uint8_t>{0, 0}), ProtocolError);
    CHECK_THROWS_AS(decode_frame(std::vector<std::uint8_t>{0, 0, 0, 9, '{'}), ProtocolError);
    CHECK_THROWS_AS(decode_frame(raw_frame("not json")), ProtocolError);
    CHECK_THROWS_AS(decode_frame(raw_frame(R"([1,2])")), ProtocolError);
    CHECK_THROWS_AS(decode_frame(raw_frame(R"({"id":1,"kind":"shout","payload":{}})")), ProtocolError);
    CHECK_THROWS_AS(decode_frame(raw_frame(R"({"id":-1,"kind":"finish","payload":{}})")), ProtocolError);
    CHECK_THROWS_AS(decode_frame(raw_frame(R"({"id":1,"kind":"finish"})")), ProtocolError);
    CHECK_THROWS_AS(decode_frame(raw_frame(R"({"id":1,"kind":"request","op":"rm.rf","payload":{}})")), ProtocolError);
    CHECK_THROWS_AS(decode_frame(raw_frame(R"({"id":1,"kind":"result","payload":{}})")), ProtocolError);
    CHECK_THROWS_AS(decode_frame(raw_frame(R"({"id":1,"kind":"finish","payload":{},"ok":true})")), ProtocolError);
    CHECK_THROWS_AS(decode_frame(raw_frame(R"({"id":1,"kind":"finish","payload":{},"extra":1})")), ProtocolError);
    CHECK_THROWS_AS(
        decode_frame(raw_frame(
            R"({"error":{"class":"fatal","message":"m","retryable":true},"id":1,"kind":"result","ok":false,"payload":{}})")),
        ProtocolError);
    CHECK_THROWS_AS(decode_frame(raw_frame(std::string(100000, '[') + std::string(100000, ']'))), ProtocolError);
}

TEST_CASE("oversized frames are refused on both sides") {
    std::vector<std::uint8_t> header{0x00, 0x80, 0x00, 0x01};  // 8 MiB + 1
    CHECK_THROWS_AS(try_decode_frame(header), ProtocolError);
    std::vector<std::uint8_t> at_cap{0x00, 0x80, 0x00, 0x00};
    CHECK_FALSE(try_decode_frame(at_cap).has_value());
    Frame huge = Frame::event(ops::log, {{"blob", std::string(kMaxFrameBodyBytes, 'a')}});
    CHECK_THROWS_AS(encode_frame(huge), ValidationError);
}

TEST_CASE("random bytes never crash the decoder") {
    std::mt19937 rng(12345);
    int parsed = 0;
    for (int i = 0; i < 10000; ++i) {
        std::vector<std::uint8_t> buf(rng() % 64);
        for (auto& b : buf) b = static_cast<std::uint8_t>(rng());
        if (i % 3 == 0 && buf.size() >= 4) {  // plausible header
            const auto n = buf.size() - 4;
            buf[0] = buf[1] = buf[2] = 0;
            buf[3] = static_cast<std::uint8_t>(n);
        }
        try {
            if (try_decode_frame(buf)) ++parsed;
        } catch (const ProtocolError&) {
        }
    }
    CHECK(parsed >= 0);
}

TEST_CASE("validate_frame enforces kind invariants") {
    Frame f = Frame::request(1, ops::log, json::object());
    f.kind = FrameKind::finish;
    CHECK_THROWS_AS(validate_frame(f), ValidationError);
    Frame r = Frame::success(1, json::object());
    r.ok = false;
    CHECK_THROWS_AS(validate_frame(r), ValidationError);
    CHECK_THROWS_AS(validate_frame(Frame::request(1, "nope", json::object())), ValidationError);
    CHECK(is_request_op("llm.invoke"));
    CHECK_FALSE(is_request_op("shell.exec"));
}

TEST_CASE("error classification is total and stable") {
    using S = FailureSource;
    CHECK(classify_error({S::provider, "timeout", ""}).cls == ErrorClass::transient);
    CHECK(classify_error({S::provider, "rate_limit", ""}).cls == ErrorClass::transient);
    CHECK(classify_error({S::provider, "http_5xx", ""}).cls == ErrorClass::transient);
    CHECK(classify_error({S::provider, "bad_request", ""}).cls == ErrorClass::validation);
    CHECK(classify_error({S::provider, "auth", ""}).cls == ErrorClass::fatal);
    CHECK(classify_error({S::blueprint, "exit_nonzero", ""}).cls == ErrorClass::fatal);
    CHECK(classify_error({S::protocol, "garbage", ""}).cls == ErrorClass::fatal);
    CHECK(classify_error({S::quota_guard, "cpu", ""}).cls == ErrorClass::quota);
    CHECK(classify_error({S::tool_arguments, "", ""}).cls == ErrorClass::validation);
    CHECK(classify_error({S::unknown, "", ""}).message == "unclassified failure");
    CHECK(classify_error({S::engine, "boom", ""}).message == "boom");
    for (auto c : {ErrorClass::transient, ErrorClass::fatal, ErrorClass::quota, ErrorClass::validation,
                   ErrorClass::protocol}) {
        ErrorInfo info{c, "m"};
        CHECK(error_info_from_json(to_json(info)) == info);
        CHECK(info.retryable() == (c == ErrorClass::transient));
    }
    CHECK_THROWS_AS(error_class_from_string("meh"), ProtocolError);
}

TEST_CASE("llm documents validate roles and tool names") {
    CHECK(is_valid_role("tool"));
    CHECK_FALSE(is_valid_role("robot"));
    CHECK(is_valid_tool_name("get_order_details"));
    CHECK_FALSE(is_valid_tool_name("Get-Order"));
    CHECK_FALSE(is_valid_tool_name(std::string(65, 'a')));
    LlmRequest req;
    req.model = "m";
    req.messages = {{"user", "hi"}};
    req.tools = {{"echo", "echo it", {{"type", "object"}}}};
    const auto back = llm_request_from_json(to_json(req));
    CHECK(back.messages == req.messages);
    CHECK(back.tools == req.tools);
    CHECK_THROWS_AS(chat_message_from_json({{"role", "robot"}, {"content", "x"}}), ValidationError);
    LlmResponse resp;
    resp.tool_calls = {{"echo", {{"text", "a"}}}};
    resp.finish_reason = FinishReason::tool_call;
    CHECK(llm_response_from_json(to_json(resp)) == resp);
}

TEST_CASE("frame channel over a socket pair") {
    int sv[2];
    REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) == 0);
    FrameChannel a{UniqueFd(sv[0])};
    FrameChannel b{UniqueFd(sv[1])};

    CHECK(b.receive(std::chrono::milliseconds(20)).status == FrameChannel::Status::timeout);
    a.send(Frame::request(3, ops::kb_query, {{"kb", "faq"}, {"query", "q"}}));
    a.send(Frame::finish(4, {{"status", "ok"}}));
    auto r1 = b.receive(std::chrono::milliseconds(500));
    REQUIRE(r1.status == FrameChannel::Status::frame);
    CHECK(r1.frame.op == "kb.query");
    auto r2 = b.receive(std::chrono::milliseconds(500));
    REQUIRE(r2.status == FrameChannel::Status::frame);
    CHECK(r2.frame.kind == FrameKind::finish);
    a.close();
    CHECK(b.receive(std::chrono::milliseconds(500)).status == FrameChannel::Status::closed);
}

TEST_CASE("EOF inside a frame is a protocol error") {
    int sv[2];
    REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) == 0);
    FrameChannel b{UniqueFd(sv[1])};
    const char partial[] = "\x00\x00\x00\x20{\"id\":";
    REQUIRE(::write(sv[0], partial, sizeof(partial) - 1) > 0);
    ::close(sv[0]);
    CHECK_THROWS_AS(b.receive(std::chrono::milliseconds(500)), ProtocolError);
}

TEST_CASE("unix socket listen/connect/accept") {
    TempDir dir("sock");
    const auto path = (dir / "s.sock").string();
    auto listener = listen_unix(path);
    REQUIRE(listener);
    CHECK_FALSE(accept_unix(listener.get(), std::chrono::milliseconds(10)));
    std::thread t([&] {
        FrameChannel c{connect_unix(path)};
        c.send(Frame::event(ops::log, {{"m", 1}}));
    });
    auto conn = accept_unix(listener.get(), std::chrono::milliseconds(2000));
    REQUIRE(conn);
    FrameChannel ch{std::move(conn)};
    auto r = ch.receive(std::chrono::milliseconds(2000));
    t.join();
    REQUIRE(r.status == FrameChannel::Status::frame);
    CHECK(r.frame.payload["m"] == 1);
}
