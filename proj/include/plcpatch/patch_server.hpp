#pragma once

#include <atomic>
#include <thread>

#include "plcpatch/plc.hpp"
#include "plcpatch/wire.hpp"

namespace plcpatch {

// Local patch server fronting the live device's memory. One client at a time,
// commands processed sequentially; bind/listen failures throw at start().
class PatchServer {
public:
    explicit PatchServer(SharedPlc& plc) : plc_(plc) {}
    ~PatchServer();

    // port 0 binds an ephemeral port; the bound port is returned.
    uint16_t start(uint16_t port);
    void stop();
    uint16_t port() const { return port_; }

private:
    void serve_loop();
    void handle_client(int fd);
    WireMessage dispatch(const WireMessage& req);

    SharedPlc& plc_;
    std::atomic<bool> running_{false};
    int listen_fd_ = -1;
    uint16_t port_ = 0;
    std::thread thread_;
};

}  // namespace plcpatch
