#pragma once

#include <optional>
#include <string>

#include "plcpatch/patchgen.hpp"
#include "plcpatch/wire.hpp"

namespace plcpatch {

class WireTransportError : public std::runtime_error {
public:
    explicit WireTransportError(const std::string& what) : std::runtime_error(what) {}
};

enum class DeployStep : uint8_t { PatchWrite = 1, TableWrite = 2, HookWrite = 3 };

struct DeployOutcome {
    bool patch_written = false;
    bool table_written = false;
    bool hook_written = false;
    std::optional<DeployStep> aborted_at;
    std::string mismatch_detail;

    bool complete() const { return patch_written && table_written && hook_written; }
};

// Client side of the deployment protocol. One connection, sequential
// request/response, throws WireTransportError on transport failures.
class PatchClient {
public:
    PatchClient() = default;
    ~PatchClient();
    PatchClient(const PatchClient&) = delete;
    PatchClient& operator=(const PatchClient&) = delete;

    void connect(const std::string& host, uint16_t port);
    void close();
    bool connected() const { return fd_ >= 0; }

    uint32_t hello();               // returns the server's protocol version
    LiveBaseInfo get_base_addr();
    bool verify_mem(uint32_t addr, const std::vector<uint8_t>& expected);
    bool write_mem(uint32_t addr, const std::vector<uint8_t>& bytes);
    bool write_hook_atomic(uint32_t addr, uint32_t expected, uint32_t replacement);

    // Three-step deployment: verify-then-write the patch site, the table
    // slot, then the single atomic hook word. Any mismatch aborts with
    // everything not yet written left untouched.
    DeployOutcome deploy(const PatchPlan& plan);

    size_t requests_sent() const { return requests_sent_; }

private:
    WireMessage roundtrip(const WireMessage& req);

    int fd_ = -1;
    std::vector<uint8_t> rxbuf_;
    size_t requests_sent_ = 0;
};

}  // namespace plcpatch
