#include "plcpatch/plc.hpp"

namespace plcpatch {

InputSource constant_input(std::vector<uint8_t> bytes) {
    return [bytes = std::move(bytes)](uint64_t cycle) -> std::optional<std::vector<uint8_t>> {
        if (cycle == 0) return bytes;
        return std::nullopt;  // inputs unchanged after the first sample
    };
}

namespace {

std::vector<uint8_t> read_mmio_in(const MemoryImage& img) {
    const Region* m = img.region(RegionKind::Mmio);
    if (!m) return {};
    std::vector<uint8_t> out(img.mmio_half());
    for (size_t i = 0; i < out.size(); ++i) out[i] = img.read8(m->base + uint32_t(i));
    return out;
}

}  // namespace

std::vector<ScanCycleResult> run_cycles(MemoryImage& image, uint64_t n, InputSource inputs,
                                        const RunCyclesOptions& opts) {
    std::vector<ScanCycleResult> results;
    bool crashed = false;
    std::vector<uint8_t> frozen_outputs = image.read_mmio_out();

    for (uint64_t i = 0; i < n; ++i) {
        ScanCycleResult res;
        res.cycle = image.cycles_done + i;

        // stage 1: input sampling
        if (auto in = inputs(i)) image.install_mmio_input(*in);
        res.inputs = read_mmio_in(image);

        if (crashed) {
            // the runtime is down: previous written values replay
            res.crashed = true;
            res.outputs = frozen_outputs;
            results.push_back(std::move(res));
            continue;
        }

        // stage 2: control logic execution
        CycleOptions copts;
        copts.budget = opts.budget_per_cycle;
        copts.cycle_index = res.cycle;
        copts.record_exec = opts.monitor != nullptr;
        if (opts.monitor) {
            copts.rules = &opts.monitor->rules;
            copts.immune_cells = &opts.monitor->immune_cells;
            copts.stop_on_alert = false;  // observe the full cycle
        }
        CycleOutcome out = run_scan_cycle(image, copts);
        res.steps = out.steps;
        res.skipped = out.status == CycleStatus::Skipped;
        res.rule_warns = out.warns;
        if (out.detection) res.rule_alerts.push_back(*out.detection);
        if (opts.monitor && opts.monitor->profile && out.status == CycleStatus::End &&
            !out.detection) {
            auto dev = sweep_profile_deviation(opts.monitor->rules, out.samples, image,
                                               *opts.monitor->profile,
                                               &opts.monitor->immune_cells);
            if (dev) res.rule_alerts.push_back(*dev);
        }

        // crash latch: a runtime-stack write, a fault or a hang downs the
        // runtime for the rest of the run
        if (out.runtime_stack_written || out.status == CycleStatus::Fault ||
            out.status == CycleStatus::Budget) {
            crashed = true;
            res.crashed = true;
            res.outputs = frozen_outputs;  // stage 3 never happens
            results.push_back(std::move(res));
            continue;
        }

        // stage 3: output refresh
        res.outputs = image.read_mmio_out();
        frozen_outputs = res.outputs;
        results.push_back(std::move(res));
    }
    image.cycles_done += n;
    return results;
}

void ProcessModel::step(int32_t steam_cmd, uint64_t cycle) {
    // ambient modulation keeps the equilibrium moving so a frozen actuator is
    // always visible in the trace
    int32_t ambient = int32_t(cycle % 32) - 16;
    brine_temp = brine_temp + (steam_cmd - brine_temp / 2) / 4 + ambient / 8;
    distillate = distillate + (brine_temp / 2 - distillate) / 4;
}

ClosedLoopTrace closed_loop(MemoryImage image, ProcessModel plant, uint64_t n,
                            const std::vector<uint8_t>& base_input,
                            std::optional<ClosedLoopAttack> attack,
                            const RunCyclesOptions& opts) {
    ClosedLoopTrace trace;
    bool crashed = false;
    std::vector<uint8_t> frozen = image.read_mmio_out();

    for (uint64_t i = 0; i < n; ++i) {
        // plant -> sensors: word0 = TB0, word1 = WD; tail from the base input
        std::vector<uint8_t> in = base_input;
        in.resize(std::max<size_t>(in.size(), 16), 0);
        uint32_t tb = uint32_t(plant.brine_temp), wd = uint32_t(plant.distillate);
        for (int j = 0; j < 4; ++j) in[size_t(j)] = uint8_t(tb >> (8 * j));
        for (int j = 0; j < 4; ++j) in[size_t(4 + j)] = uint8_t(wd >> (8 * j));
        if (attack && i >= attack->cycle)
            for (size_t j = 0; j < attack->bytes.size(); ++j)
                if (attack->offset + j < in.size()) in[attack->offset + j] = attack->bytes[j];
        image.install_mmio_input(in);

        std::vector<uint8_t> outs;
        if (!crashed) {
            CycleOptions copts;
            copts.budget = opts.budget_per_cycle;
            copts.cycle_index = image.cycles_done + i;
            copts.record_exec = false;
            CycleOutcome out = run_scan_cycle(image, copts);
            if (out.runtime_stack_written || out.status == CycleStatus::Fault ||
                out.status == CycleStatus::Budget) {
                crashed = true;
                outs = frozen;
            } else {
                outs = image.read_mmio_out();
                frozen = outs;
            }
        } else {
            outs = frozen;
        }

        int32_t steam = 0;
        if (outs.size() >= 4)
            steam = int32_t(uint32_t(outs[0]) | uint32_t(outs[1]) << 8 |
                            uint32_t(outs[2]) << 16 | uint32_t(outs[3]) << 24);
        plant.step(steam, i);

        trace.steam_cmd.push_back(steam);
        trace.brine_temp.push_back(plant.brine_temp);
        trace.distillate.push_back(plant.distillate);
        trace.crashed.push_back(crashed);
    }
    return trace;
}

// ---------------------------------------------------------------------------
// SharedPlc
// ---------------------------------------------------------------------------

bool SharedPlc::atomic_hook_write(uint32_t addr, uint32_t expected, uint32_t replacement) {
    std::lock_guard<std::mutex> g(mutex_);
    if (!image_.mapped_range(addr, 4)) return false;
    if (image_.read32(addr) != expected) return false;
    image_.write32(addr, replacement);
    return true;
}

bool SharedPlc::verify_bytes(uint32_t addr, const std::vector<uint8_t>& expected) {
    std::lock_guard<std::mutex> g(mutex_);
    for (size_t i = 0; i < expected.size(); ++i) {
        uint32_t a = addr + uint32_t(i);
        if (!image_.mapped(a) || image_.read8(a) != expected[i]) return false;
    }
    return true;
}

bool SharedPlc::write_bytes(uint32_t addr, const std::vector<uint8_t>& bytes) {
    std::lock_guard<std::mutex> g(mutex_);
    if (bytes.empty()) return true;
    for (size_t i = 0; i < bytes.size(); ++i)
        if (!image_.mapped(addr + uint32_t(i))) return false;
    for (size_t i = 0; i < bytes.size(); ++i) image_.write8(addr + uint32_t(i), bytes[i]);
    return true;
}

LiveBaseInfo SharedPlc::base_info() {
    std::lock_guard<std::mutex> g(mutex_);
    LiveBaseInfo info = LiveBaseInfo::self(image_);
    info.version = "live-1";
    return info;
}

void SharedPlc::mark_patched_cell(uint32_t addr) {
    std::lock_guard<std::mutex> g(mutex_);
    patched_cells_.insert(addr);
}

std::set<uint32_t> SharedPlc::patched_cells() {
    std::lock_guard<std::mutex> g(mutex_);
    return patched_cells_;
}

std::vector<uint8_t> SharedPlc::snapshot_outputs() {
    std::lock_guard<std::mutex> g(mutex_);
    return image_.read_mmio_out();
}

MemoryImage SharedPlc::clone_image() {
    std::lock_guard<std::mutex> g(mutex_);
    return image_;
}

SharedPlc::CycleStats SharedPlc::run_one_cycle(uint64_t cycle, const std::vector<uint8_t>& inputs,
                                               uint64_t budget, std::vector<uint32_t>* fetch_log,
                                               uint32_t watch_fetch, uint32_t watch_exec) {
    (void)cycle;
    CycleStats stats;
    CpuState cpu;
    uint32_t end;
    {
        std::lock_guard<std::mutex> g(mutex_);
        if (!inputs.empty()) image_.install_mmio_input(inputs);
        if (crashed_) {
            stats.crashed = true;
            return stats;
        }
        if (image_.gate_addr && image_.read32(image_.gate_addr) != 0) {
            stats.skipped = true;
            return stats;
        }
        cpu.regs.pc() = image_.app_entry;
        cpu.regs.sp() = image_.initial_sp;
        cpu.regs.lr() = image_.initial_lr;
        end = image_.initial_lr;
    }

    bool runtime_stack_hit = false;
    while (true) {
        std::unique_lock<std::mutex> g(mutex_);
        if (cpu.regs.pc() == end) break;
        if (stats.steps >= budget) {
            crashed_ = true;
            stats.crashed = true;
            return stats;
        }
        uint32_t pc = cpu.regs.pc();
        if (watch_fetch && pc == watch_fetch && fetch_log && image_.mapped_range(pc, 4))
            fetch_log->push_back(image_.read32(pc));
        if (watch_exec && pc == watch_exec) stats.executed_addr = true;

        StepResult sr = step(cpu, image_);
        stats.steps += 1;
        if (sr.fault == Fault::UnmappedFetch || sr.fault == Fault::UndefinedInstruction) {
            crashed_ = true;
            stats.crashed = true;
            return stats;
        }
        for (const auto& e : sr.events) {
            if (e.kind == EventKind::MemWrite) {
                auto k = image_.try_classify(e.addr);
                if (k && *k == RegionKind::RuntimeStack) runtime_stack_hit = true;
            }
        }
        g.unlock();  // the lock yields between steps
    }
    if (runtime_stack_hit) {
        std::lock_guard<std::mutex> g(mutex_);
        crashed_ = true;
        stats.crashed = true;
        frozen_outputs_ = image_.read_mmio_out();
    }
    return stats;
}

}  // namespace plcpatch
