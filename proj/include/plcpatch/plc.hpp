#pragma once

#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <vector>

#include "plcpatch/patchgen.hpp"
#include "plcpatch/rehost.hpp"

namespace plcpatch {

struct ScanCycleResult {
    uint64_t cycle = 0;
    std::vector<uint8_t> inputs;   // MMIO input bytes sampled this cycle
    std::vector<uint8_t> outputs;  // MMIO output bytes after the cycle
    uint64_t steps = 0;
    bool crashed = false;
    bool skipped = false;  // loader gate held the cycle back
    std::vector<Detection> rule_alerts;  // monitored mode only
    std::vector<Detection> rule_warns;
};

// Per-cycle input bytes. Returning nullopt keeps the previous cycle's inputs.
using InputSource = std::function<std::optional<std::vector<uint8_t>>(uint64_t cycle)>;

InputSource constant_input(std::vector<uint8_t> bytes);

struct MonitorConfig {
    std::vector<Rule> rules;
    std::optional<StackWriteProfile> profile;
    std::set<uint32_t> immune_cells;  // patch-managed table cells
};

struct RunCyclesOptions {
    uint64_t budget_per_cycle = 200000;
    const MonitorConfig* monitor = nullptr;  // nullptr = unmonitored
};

// The live device loop: sample inputs, execute entry->end, refresh outputs.
// A runtime-stack write or an execution fault latches `crashed`; outputs then
// hold the last pre-crash values for every following cycle.
std::vector<ScanCycleResult> run_cycles(MemoryImage& image, uint64_t n, InputSource inputs,
                                        const RunCyclesOptions& opts = {});

// First-order integer plant standing in for the desalination process: brine
// temperature drives the distillate rate; the controller output feeds back as
// steam valve actuation. Deterministic integer update with a periodic ambient
// modulation so the closed loop never settles into a constant trace.
struct ProcessModel {
    int32_t brine_temp = 0x40;  // TB0
    int32_t distillate = 0x20;  // WD

    void step(int32_t steam_cmd, uint64_t cycle);
};

struct ClosedLoopAttack {
    uint64_t cycle = 0;
    uint32_t offset = 0;         // byte offset into the MMIO input window
    std::vector<uint8_t> bytes;  // overwrites [offset, offset+len) from this cycle on
};

struct ClosedLoopTrace {
    std::vector<int32_t> brine_temp;
    std::vector<int32_t> distillate;
    std::vector<int32_t> steam_cmd;
    std::vector<bool> crashed;
};

// Plant -> MMIO inputs; controller outputs -> plant actuation, per cycle.
// The attack overwrites its designated input bytes from its cycle onward.
ClosedLoopTrace closed_loop(MemoryImage image, ProcessModel plant, uint64_t n,
                            const std::vector<uint8_t>& base_input,
                            std::optional<ClosedLoopAttack> attack,
                            const RunCyclesOptions& opts = {});

// ---------------------------------------------------------------------------
// Shared live device: the scan-cycle loop and the patch server front the same
// image behind one lock. Every instruction step and every patch write happens
// under it; the hook write holds it for exactly one word write.
// ---------------------------------------------------------------------------
class SharedPlc {
public:
    explicit SharedPlc(MemoryImage image) : image_(std::move(image)) {}

    // Compare-and-swap of one word under the lock; never tears.
    bool atomic_hook_write(uint32_t addr, uint32_t expected, uint32_t replacement);

    bool verify_bytes(uint32_t addr, const std::vector<uint8_t>& expected);
    bool write_bytes(uint32_t addr, const std::vector<uint8_t>& bytes);
    LiveBaseInfo base_info();
    void mark_patched_cell(uint32_t addr);          // restore-plan metadata
    std::set<uint32_t> patched_cells();
    std::vector<uint8_t> snapshot_outputs();
    MemoryImage clone_image();

    struct CycleStats {
        uint64_t steps = 0;
        bool crashed = false;
        bool skipped = false;
        bool executed_addr = false;  // watch_exec address ran this cycle
    };

    // One scan cycle with the lock taken per instruction step and released
    // between steps. Fetches of `watch_fetch` are logged (old/new word checks
    // for the linearizability harness); `watch_exec` flags the patch path.
    CycleStats run_one_cycle(uint64_t cycle, const std::vector<uint8_t>& inputs,
                             uint64_t budget = 200000,
                             std::vector<uint32_t>* fetch_log = nullptr,
                             uint32_t watch_fetch = 0, uint32_t watch_exec = 0);

private:
    std::mutex mutex_;
    MemoryImage image_;
    bool crashed_ = false;
    std::vector<uint8_t> frozen_outputs_;
    std::set<uint32_t> patched_cells_;
};

}  // namespace plcpatch
