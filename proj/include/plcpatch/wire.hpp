#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace plcpatch {

// Length-prefixed frames: 4-byte big-endian length covering one type byte
// plus the payload, followed by fixed-order little-endian payload fields.
// Byte-exact layout documented in docs/protocol.md.

enum class MsgType : uint8_t {
    Hello = 0x01,
    GetBaseAddr = 0x02,
    VerifyMem = 0x03,
    WriteMem = 0x04,
    WriteHookAtomic = 0x05,
    Ok = 0x10,
    Err = 0x11,
};

enum class WireErr : uint8_t {
    Protocol = 1,
    Mismatch = 2,
    BadAddress = 3,
};

struct WireMessage {
    MsgType type = MsgType::Hello;
    uint32_t addr = 0;
    uint32_t expected_word = 0;  // WriteHookAtomic
    uint32_t new_word = 0;       // WriteHookAtomic
    std::vector<uint8_t> bytes;  // VerifyMem expected / WriteMem data / Ok payload
    uint8_t err_code = 0;
    std::string err_msg;

    bool operator==(const WireMessage&) const = default;
};

constexpr uint32_t WIRE_PROTOCOL_VERSION = 1;
constexpr uint32_t WIRE_MAX_FRAME = 1 << 20;

std::vector<uint8_t> encode_frame(const WireMessage& msg);

// Parses one complete frame from the buffer front. Returns the message and
// sets consumed; nullopt with consumed == 0 means more bytes are needed.
// Throws WireFormatError on an undecodable payload.
class WireFormatError : public std::runtime_error {
public:
    explicit WireFormatError(const std::string& what) : std::runtime_error(what) {}
};

std::optional<WireMessage> decode_frame(const std::vector<uint8_t>& buf, size_t& consumed);

}  // namespace plcpatch
