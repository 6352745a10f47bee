#include "plcpatch/patch_client.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

namespace plcpatch {

PatchClient::~PatchClient() { close(); }

void PatchClient::connect(const std::string& host, uint16_t port) {
    close();
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw WireTransportError("socket() failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (host == "localhost") {
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    } else if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd_);
        fd_ = -1;
        throw WireTransportError("unresolvable host: " + host);
    }
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
        ::close(fd_);
        fd_ = -1;
        throw WireTransportError("connect() failed");
    }
}

void PatchClient::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
    rxbuf_.clear();
}

WireMessage PatchClient::roundtrip(const WireMessage& req) {
    if (fd_ < 0) throw WireTransportError("not connected");
    auto frame = encode_frame(req);
    size_t off = 0;
    while (off < frame.size()) {
        ssize_t w = ::send(fd_, frame.data() + off, frame.size() - off, MSG_NOSIGNAL);
        if (w <= 0) throw WireTransportError("send() failed");
        off += size_t(w);
    }
    ++requests_sent_;

    uint8_t chunk[4096];
    while (true) {
        size_t consumed = 0;
        auto msg = decode_frame(rxbuf_, consumed);
        if (msg) {
            rxbuf_.erase(rxbuf_.begin(), rxbuf_.begin() + long(consumed));
            return *msg;
        }
        ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
        if (n <= 0) throw WireTransportError("connection closed mid-reply");
        rxbuf_.insert(rxbuf_.end(), chunk, chunk + n);
    }
}

uint32_t PatchClient::hello() {
    WireMessage req;
    req.type = MsgType::Hello;
    WireMessage rep = roundtrip(req);
    if (rep.type != MsgType::Ok || rep.bytes.size() < 4)
        throw WireTransportError("bad hello reply");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(rep.bytes[size_t(i)]) << (8 * i);
    return v;
}

LiveBaseInfo PatchClient::get_base_addr() {
    WireMessage req;
    req.type = MsgType::GetBaseAddr;
    WireMessage rep = roundtrip(req);
    if (rep.type != MsgType::Ok || rep.bytes.empty())
        throw WireTransportError("bad base-address reply");
    LiveBaseInfo info;
    size_t off = 0;
    uint8_t count = rep.bytes[off++];
    for (uint8_t i = 0; i < count; ++i) {
        if (off + 5 > rep.bytes.size()) throw WireTransportError("truncated base-address reply");
        RegionKind kind = RegionKind(rep.bytes[off++]);
        uint32_t base = 0;
        for (int j = 0; j < 4; ++j) base |= uint32_t(rep.bytes[off++]) << (8 * j);
        info.bases[kind] = base;
    }
    if (off >= rep.bytes.size()) throw WireTransportError("truncated version tag");
    uint8_t vlen = rep.bytes[off++];
    if (off + vlen > rep.bytes.size()) throw WireTransportError("truncated version tag");
    info.version.assign(rep.bytes.begin() + long(off), rep.bytes.begin() + long(off + vlen));
    return info;
}

bool PatchClient::verify_mem(uint32_t addr, const std::vector<uint8_t>& expected) {
    WireMessage req;
    req.type = MsgType::VerifyMem;
    req.addr = addr;
    req.bytes = expected;
    return roundtrip(req).type == MsgType::Ok;
}

bool PatchClient::write_mem(uint32_t addr, const std::vector<uint8_t>& bytes) {
    WireMessage req;
    req.type = MsgType::WriteMem;
    req.addr = addr;
    req.bytes = bytes;
    return roundtrip(req).type == MsgType::Ok;
}

bool PatchClient::write_hook_atomic(uint32_t addr, uint32_t expected, uint32_t replacement) {
    WireMessage req;
    req.type = MsgType::WriteHookAtomic;
    req.addr = addr;
    req.expected_word = expected;
    req.new_word = replacement;
    return roundtrip(req).type == MsgType::Ok;
}

DeployOutcome PatchClient::deploy(const PatchPlan& plan) {
    DeployOutcome out;

    // step 1: the patch site must still be empty, then the body lands
    std::vector<uint8_t> zeros(plan.patch_bytes.size(), 0);
    if (!verify_mem(plan.patch_addr, zeros)) {
        out.aborted_at = DeployStep::PatchWrite;
        out.mismatch_detail = "patch site not empty";
        return out;
    }
    if (!write_mem(plan.patch_addr, plan.patch_bytes)) {
        out.aborted_at = DeployStep::PatchWrite;
        out.mismatch_detail = "patch site rejected the write";
        return out;
    }
    out.patch_written = true;

    // step 2: an empty table slot takes the patch address
    if (!verify_mem(plan.table_slot_addr, {0, 0, 0, 0})) {
        out.aborted_at = DeployStep::TableWrite;
        out.mismatch_detail = "table slot not empty";
        return out;
    }
    std::vector<uint8_t> slot_word(4);
    for (int i = 0; i < 4; ++i) slot_word[size_t(i)] = uint8_t(plan.table_slot_value >> (8 * i));
    if (!write_mem(plan.table_slot_addr, slot_word)) {
        out.aborted_at = DeployStep::TableWrite;
        out.mismatch_detail = "table slot rejected the write";
        return out;
    }
    out.table_written = true;

    // step 3: the hook needs an exact content match, swapped in one shot
    if (!write_hook_atomic(plan.hook_addr, plan.hook_old_word, plan.hook_new_word)) {
        out.aborted_at = DeployStep::HookWrite;
        out.mismatch_detail = "hook word mismatch";
        return out;
    }
    out.hook_written = true;
    return out;
}

}  // namespace plcpatch
