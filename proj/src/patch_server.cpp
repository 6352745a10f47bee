#include "plcpatch/patch_server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace plcpatch {

PatchServer::~PatchServer() { stop(); }

uint16_t PatchServer::start(uint16_t port) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw std::runtime_error("patch server: socket() failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw std::runtime_error("patch server: bind() failed");
    }
    if (::listen(listen_fd_, 1) < 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw std::runtime_error("patch server: listen() failed");
    }
    socklen_t alen = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &alen);
    port_ = ntohs(addr.sin_port);

    running_ = true;
    thread_ = std::thread([this] { serve_loop(); });
    return port_;
}

void PatchServer::stop() {
    if (!running_.exchange(false)) {
        if (thread_.joinable()) thread_.join();
        return;
    }
    if (listen_fd_ >= 0) {
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        listen_fd_ = -1;
    }
    if (thread_.joinable()) thread_.join();
}

void PatchServer::serve_loop() {
    while (running_) {
        int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (!running_) break;
            continue;
        }
        handle_client(fd);
        ::close(fd);
    }
}

void PatchServer::handle_client(int fd) {
    // bounded recv so stop() never waits behind a silent client
    timeval tv{0, 200000};
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));

    std::vector<uint8_t> buf;
    uint8_t chunk[4096];
    while (running_) {
        ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
        if (n == 0) return;
        if (n < 0) {
            if (errno == EAGAIN || errno == EWOULDBLOCK) continue;
            return;
        }
        buf.insert(buf.end(), chunk, chunk + n);

        while (true) {
            size_t consumed = 0;
            WireMessage reply;
            bool have = false;
            try {
                auto req = decode_frame(buf, consumed);
                if (!req) break;  // need more bytes
                buf.erase(buf.begin(), buf.begin() + long(consumed));
                reply = dispatch(*req);
                have = true;
            } catch (const WireFormatError& e) {
                // a malformed payload answers with a protocol error and the
                // connection stays up; resync by dropping the bad frame
                if (consumed == 0 && buf.size() >= 4) {
                    uint32_t len = uint32_t(buf[0]) << 24 | uint32_t(buf[1]) << 16 |
                                   uint32_t(buf[2]) << 8 | uint32_t(buf[3]);
                    size_t drop = std::min(buf.size(), size_t(4) + size_t(len));
                    if (len == 0 || len > WIRE_MAX_FRAME) drop = buf.size();
                    buf.erase(buf.begin(), buf.begin() + long(drop));
                } else {
                    buf.erase(buf.begin(), buf.begin() + long(consumed));
                }
                reply.type = MsgType::Err;
                reply.err_code = uint8_t(WireErr::Protocol);
                reply.err_msg = e.what();
                have = true;
            }
            if (have) {
                auto frame = encode_frame(reply);
                size_t off = 0;
                while (off < frame.size()) {
                    ssize_t w = ::send(fd, frame.data() + off, frame.size() - off, MSG_NOSIGNAL);
                    if (w <= 0) return;
                    off += size_t(w);
                }
            }
        }
    }
}

WireMessage PatchServer::dispatch(const WireMessage& req) {
    WireMessage ok;
    ok.type = MsgType::Ok;
    WireMessage err;
    err.type = MsgType::Err;

    switch (req.type) {
        case MsgType::Hello: {
            for (int i = 0; i < 4; ++i)
                ok.bytes.push_back(uint8_t(WIRE_PROTOCOL_VERSION >> (8 * i)));
            return ok;
        }
        case MsgType::GetBaseAddr: {
            LiveBaseInfo info = plc_.base_info();
            ok.bytes.push_back(uint8_t(info.bases.size()));
            for (const auto& [kind, base] : info.bases) {
                ok.bytes.push_back(uint8_t(kind));
                for (int i = 0; i < 4; ++i) ok.bytes.push_back(uint8_t(base >> (8 * i)));
            }
            ok.bytes.push_back(uint8_t(info.version.size()));
            ok.bytes.insert(ok.bytes.end(), info.version.begin(), info.version.end());
            return ok;
        }
        case MsgType::VerifyMem:
            if (plc_.verify_bytes(req.addr, req.bytes)) return ok;
            err.err_code = uint8_t(WireErr::Mismatch);
            err.err_msg = "memory content mismatch";
            return err;
        case MsgType::WriteMem:
            if (plc_.write_bytes(req.addr, req.bytes)) return ok;
            err.err_code = uint8_t(WireErr::BadAddress);
            err.err_msg = "write outside mapped regions";
            return err;
        case MsgType::WriteHookAtomic:
            if (plc_.atomic_hook_write(req.addr, req.expected_word, req.new_word)) return ok;
            err.err_code = uint8_t(WireErr::Mismatch);
            err.err_msg = "hook word mismatch";
            return err;
        default:
            err.err_code = uint8_t(WireErr::Protocol);
            err.err_msg = "request type not handled";
            return err;
    }
}

}  // namespace plcpatch
