#include "plcpatch/wire.hpp"

namespace plcpatch {

namespace {

void put_u32le(std::vector<uint8_t>& v, uint32_t x) {
    for (int i = 0; i < 4; ++i) v.push_back(uint8_t(x >> (8 * i)));
}

uint32_t get_u32le(const std::vector<uint8_t>& v, size_t& off) {
    if (off + 4 > v.size()) throw WireFormatError("truncated u32 field");
    uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= uint32_t(v[off + size_t(i)]) << (8 * i);
    off += 4;
    return x;
}

}  // namespace

std::vector<uint8_t> encode_frame(const WireMessage& msg) {
    std::vector<uint8_t> payload;
    payload.push_back(uint8_t(msg.type));
    switch (msg.type) {
        case MsgType::Hello:
        case MsgType::GetBaseAddr:
            break;
        case MsgType::VerifyMem:
        case MsgType::WriteMem:
            put_u32le(payload, msg.addr);
            put_u32le(payload, uint32_t(msg.bytes.size()));
            payload.insert(payload.end(), msg.bytes.begin(), msg.bytes.end());
            break;
        case MsgType::WriteHookAtomic:
            put_u32le(payload, msg.addr);
            put_u32le(payload, msg.expected_word);
            put_u32le(payload, msg.new_word);
            break;
        case MsgType::Ok:
            put_u32le(payload, uint32_t(msg.bytes.size()));
            payload.insert(payload.end(), msg.bytes.begin(), msg.bytes.end());
            break;
        case MsgType::Err: {
            payload.push_back(msg.err_code);
            uint32_t n = uint32_t(msg.err_msg.size());
            payload.push_back(uint8_t(n & 0xFF));
            payload.push_back(uint8_t((n >> 8) & 0xFF));
            payload.insert(payload.end(), msg.err_msg.begin(), msg.err_msg.end());
            break;
        }
    }
    std::vector<uint8_t> frame;
    uint32_t len = uint32_t(payload.size());
    frame.push_back(uint8_t(len >> 24));
    frame.push_back(uint8_t(len >> 16));
    frame.push_back(uint8_t(len >> 8));
    frame.push_back(uint8_t(len));
    frame.insert(frame.end(), payload.begin(), payload.end());
    return frame;
}

std::optional<WireMessage> decode_frame(const std::vector<uint8_t>& buf, size_t& consumed) {
    consumed = 0;
    if (buf.size() < 4) return std::nullopt;
    uint32_t len = uint32_t(buf[0]) << 24 | uint32_t(buf[1]) << 16 | uint32_t(buf[2]) << 8 |
                   uint32_t(buf[3]);
    if (len == 0 || len > WIRE_MAX_FRAME) throw WireFormatError("frame length out of range");
    if (buf.size() < 4 + size_t(len)) return std::nullopt;

    std::vector<uint8_t> payload(buf.begin() + 4, buf.begin() + 4 + long(len));
    consumed = 4 + size_t(len);

    WireMessage msg;
    size_t off = 0;
    uint8_t t = payload[off++];
    switch (t) {
        case uint8_t(MsgType::Hello):
        case uint8_t(MsgType::GetBaseAddr):
            msg.type = MsgType(t);
            if (off != payload.size()) throw WireFormatError("unexpected trailing bytes");
            return msg;
        case uint8_t(MsgType::VerifyMem):
        case uint8_t(MsgType::WriteMem): {
            msg.type = MsgType(t);
            msg.addr = get_u32le(payload, off);
            uint32_t n = get_u32le(payload, off);
            if (off + n != payload.size()) throw WireFormatError("byte-string length mismatch");
            msg.bytes.assign(payload.begin() + long(off), payload.end());
            return msg;
        }
        case uint8_t(MsgType::WriteHookAtomic):
            msg.type = MsgType::WriteHookAtomic;
            msg.addr = get_u32le(payload, off);
            msg.expected_word = get_u32le(payload, off);
            msg.new_word = get_u32le(payload, off);
            if (off != payload.size()) throw WireFormatError("unexpected trailing bytes");
            return msg;
        case uint8_t(MsgType::Ok): {
            msg.type = MsgType::Ok;
            uint32_t n = get_u32le(payload, off);
            if (off + n != payload.size()) throw WireFormatError("payload length mismatch");
            msg.bytes.assign(payload.begin() + long(off), payload.end());
            return msg;
        }
        case uint8_t(MsgType::Err): {
            msg.type = MsgType::Err;
            if (off + 3 > payload.size()) throw WireFormatError("truncated error frame");
            msg.err_code = payload[off++];
            uint32_t n = uint32_t(payload[off]) | uint32_t(payload[off + 1]) << 8;
            off += 2;
            if (off + n != payload.size()) throw WireFormatError("error text length mismatch");
            msg.err_msg.assign(payload.begin() + long(off), payload.end());
            return msg;
        }
        default:
            throw WireFormatError("unknown message type");
    }
}

}  // namespace plcpatch
