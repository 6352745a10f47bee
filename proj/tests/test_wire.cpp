#include "doctest.h"

#include <random>

#include "plcpatch/wire.hpp"

using namespace plcpatch;

TEST_CASE("encode/decode identity over generated messages of every type") {
    std::mt19937 rng(2024);
    auto rand_bytes = [&](size_t max) {
        std::vector<uint8_t> v(rng() % max);
        for (auto& b : v) b = uint8_t(rng());
        return v;
    };
    for (int trial = 0; trial < 2000; ++trial) {
        WireMessage m;
        switch (trial % 7) {
            case 0: m.type = MsgType::Hello; break;
            case 1: m.type = MsgType::GetBaseAddr; break;
            case 2:
                m.type = MsgType::VerifyMem;
                m.addr = rng();
                m.bytes = rand_bytes(128);
                break;
            case 3:
                m.type = MsgType::WriteMem;
                m.addr = rng();
                m.bytes = rand_bytes(128);
                break;
            case 4:
                m.type = MsgType::WriteHookAtomic;
                m.addr = rng();
                m.expected_word = rng();
                m.new_word = rng();
                break;
            case 5:
                m.type = MsgType::Ok;
                m.bytes = rand_bytes(64);
                break;
            default:
                m.type = MsgType::Err;
                m.err_code = uint8_t(rng() % 4);
                m.err_msg = std::string(rng() % 32, 'x');
                break;
        }
        auto frame = encode_frame(m);
        size_t consumed = 0;
        auto back = decode_frame(frame, consumed);
        REQUIRE(back.has_value());
        CHECK(consumed == frame.size());
        CHECK(*back == m);
    }
}

TEST_CASE("framing: partial buffers wait, concatenated frames split cleanly") {
    WireMessage a;
    a.type = MsgType::VerifyMem;
    a.addr = 0xB6420118;
    a.bytes = {1, 2, 3};
    WireMessage b;
    b.type = MsgType::Hello;

    auto fa = encode_frame(a), fb = encode_frame(b);
    std::vector<uint8_t> stream = fa;
    stream.insert(stream.end(), fb.begin(), fb.end());

    // incomplete prefix: no message, zero consumed
    for (size_t cut = 0; cut < fa.size(); ++cut) {
        std::vector<uint8_t> part(stream.begin(), stream.begin() + long(cut));
        size_t consumed = 9;
        auto m = decode_frame(part, consumed);
        CHECK_FALSE(m.has_value());
        CHECK(consumed == 0);
    }
    // full stream: first frame decodes, remainder holds the second
    size_t consumed = 0;
    auto m1 = decode_frame(stream, consumed);
    REQUIRE(m1.has_value());
    CHECK(*m1 == a);
    std::vector<uint8_t> rest(stream.begin() + long(consumed), stream.end());
    size_t consumed2 = 0;
    auto m2 = decode_frame(rest, consumed2);
    REQUIRE(m2.has_value());
    CHECK(*m2 == b);
}

TEST_CASE("byte-exact layout: documented hex example") {
    // VERIFY_MEM addr=0xB61B3248 with expected bytes 0C 60 9B E5:
    // length 00 00 00 0D, type 03, addr LE, len LE, bytes
    WireMessage m;
    m.type = MsgType::VerifyMem;
    m.addr = 0xB61B3248;
    m.bytes = {0x0C, 0x60, 0x9B, 0xE5};
    auto f = encode_frame(m);
    const uint8_t expect[] = {0x00, 0x00, 0x00, 0x0D, 0x03, 0x48, 0x32, 0x1B, 0xB6,
                              0x04, 0x00, 0x00, 0x00, 0x0C, 0x60, 0x9B, 0xE5};
    REQUIRE(f.size() == sizeof(expect));
    for (size_t i = 0; i < sizeof(expect); ++i) CHECK(f[i] == expect[i]);
}

TEST_CASE("malformed payloads throw, oversized lengths throw") {
    // unknown type byte inside a well-formed frame
    std::vector<uint8_t> bad = {0, 0, 0, 1, 0x7F};
    size_t consumed = 0;
    CHECK_THROWS_AS(decode_frame(bad, consumed), WireFormatError);

    // truncated field
    std::vector<uint8_t> trunc = {0, 0, 0, 3, 0x03, 0x01, 0x02};
    CHECK_THROWS_AS(decode_frame(trunc, consumed), WireFormatError);

    // absurd length prefix
    std::vector<uint8_t> huge = {0x7F, 0xFF, 0xFF, 0xFF, 0x01};
    CHECK_THROWS_AS(decode_frame(huge, consumed), WireFormatError);
}
