#include "plcpatch/rehost.hpp"

#include <algorithm>

#include "plcpatch/snapshot.hpp"

namespace plcpatch {

namespace {

struct FrameInfo {
    uint32_t fn_entry = 0;
    uint32_t frame_base = 0;   // sp at entry
    uint32_t return_addr = 0;
    uint32_t call_branch_pc = 0;
    bool in_app = false;
};

const FrameInfo* innermost_app_frame(const std::vector<FrameInfo>& stack) {
    for (auto it = stack.rbegin(); it != stack.rend(); ++it)
        if (it->in_app) return &*it;
    return nullptr;
}

}  // namespace

CycleOutcome run_scan_cycle(MemoryImage& img, const CycleOptions& opts) {
    CycleOutcome out;

    if (img.gate_addr && img.read32(img.gate_addr) != 0) {
        out.status = CycleStatus::Skipped;
        return out;
    }

    CpuState cpu;
    cpu.regs.pc() = img.app_entry;
    cpu.regs.sp() = img.initial_sp;
    cpu.regs.lr() = img.initial_lr;
    const uint32_t end = img.initial_lr;

    const Region* app_code = img.region(RegionKind::AppCode);
    auto in_app_code = [&](uint32_t a) { return app_code && app_code->contains(a); };

    std::vector<FrameInfo> frames;
    frames.push_back({img.app_entry, img.initial_sp, end, 0, in_app_code(img.app_entry)});
    out.app_entries_seen.insert(img.app_entry);

    EvalContext ectx;
    ectx.immune_cells = opts.immune_cells;
    ectx.warn_sink = &out.warns;

    while (true) {
        if (cpu.regs.pc() == end) {
            out.status = CycleStatus::End;
            return out;
        }
        if (out.steps >= opts.budget) {
            out.status = CycleStatus::Budget;
            return out;
        }
        uint32_t pc = cpu.regs.pc();

        std::optional<Instruction> instr;
        if (img.mapped_range(pc, 4)) instr = decode(img.read32(pc));

        StepResult sr = step(cpu, img);
        out.steps += 1;
        if (sr.fault == Fault::UnmappedFetch || sr.fault == Fault::UndefinedInstruction) {
            out.status = CycleStatus::Fault;
            out.fault = sr.fault;
            out.fault_pc = pc;
            return out;
        }

        size_t exec_index = out.exec.size();
        if (opts.record_exec || opts.ddg) {
            ExecRecord rec;
            rec.pc = pc;
            rec.op = instr ? instr->op : Op::Nop;
            for (const auto& e : sr.events) {
                if (e.kind == EventKind::Branch) {
                    rec.branched = true;
                    rec.branch_target = e.target;
                }
            }
            out.exec.push_back(rec);
        }

        if (opts.ddg) {
            opts.ddg->add_instr_node(pc, instr ? disassemble(*instr) : std::string());
            for (const auto& e : sr.events) opts.ddg->record(e);
        }

        // shadow call stack: the indirect call writes pc from a non-lr
        // register; returns come through lr
        if (instr && instr->op == Op::MovPcReg) {
            uint32_t target = cpu.regs.pc();
            if (instr->rm == REG_LR) {
                while (!frames.empty() && frames.back().return_addr == target) {
                    frames.pop_back();
                    break;
                }
                if (!frames.empty() && frames.back().return_addr != target &&
                    frames.size() > 1) {
                    // tolerate mismatched returns: unwind to a matching frame
                    for (size_t i = frames.size(); i-- > 1;) {
                        if (frames[i].return_addr == target) {
                            frames.resize(i);
                            break;
                        }
                    }
                }
            } else {
                FrameInfo f;
                f.fn_entry = target;
                f.frame_base = cpu.regs.sp();
                f.return_addr = pc + 4;
                f.call_branch_pc = pc;
                f.in_app = in_app_code(target);
                frames.push_back(f);
                if (f.in_app) out.app_entries_seen.insert(target);
            }
        }

        // translate memory effects into rule samples
        auto push_sample = [&](bool is_write, uint32_t addr, uint32_t value, bool mapped) {
            AccessSample s;
            s.is_write = is_write;
            s.pc = pc;
            s.addr = addr;
            s.value = value;
            s.mapped = mapped;
            s.cycle = opts.cycle_index;
            s.cycle_step = out.steps;
            if (const FrameInfo* f = innermost_app_frame(frames)) {
                s.has_frame = true;
                s.frame_base = f->frame_base;
                s.fn_entry = f->fn_entry;
            }
            if (is_write && mapped) {
                auto k = img.try_classify(addr);
                if (k && *k == RegionKind::RuntimeStack) out.runtime_stack_written = true;
            }
            out.samples.push_back(s);
            out.sample_exec_index.push_back(exec_index);

            if (opts.rules) {
                auto det = evaluate(*opts.rules, s, img, ectx);
                if (det && !out.detection) {
                    out.detection = det;
                    out.detection_exec_index = exec_index;
                    out.detection_frame_base = s.frame_base;
                    out.detection_fn_entry = s.fn_entry;
                    if (const FrameInfo* f = innermost_app_frame(frames)) {
                        // call into the frame directly above the app frame
                        uint32_t above_call = 0;
                        for (size_t i = 0; i + 1 < frames.size(); ++i) {
                            if (&frames[i] == f) {
                                above_call = frames[i + 1].call_branch_pc;
                                break;
                            }
                        }
                        out.violating_call_branch_pc = above_call;
                    }
                }
            }
        };

        for (const auto& e : sr.events) {
            if (e.kind == EventKind::MemWrite) push_sample(true, e.addr, e.value, true);
            else if (e.kind == EventKind::MemRead) push_sample(false, e.addr, e.value, true);
        }
        if (sr.fault == Fault::UnmappedAccess)
            push_sample(sr.access.is_write, sr.access.addr, 0, false);

        if (out.detection && opts.stop_on_alert) {
            out.status = CycleStatus::Alert;
            return out;
        }
    }
}

StackWriteProfile build_profile(const MemoryImage& image, const std::vector<uint8_t>& legit_input,
                                uint64_t budget) {
    MemoryImage img = image;
    img.install_mmio_input(legit_input);
    CycleOptions opts;
    opts.budget = budget;
    opts.cycle_index = img.cycles_done;
    CycleOutcome out = run_scan_cycle(img, opts);
    if (out.status == CycleStatus::Budget)
        throw BudgetExhaustedError("profile run exhausted its step budget");
    if (out.status == CycleStatus::Fault)
        throw RehostError("profile run faulted; legitimate inputs must execute cleanly");

    StackWriteProfile profile;
    const Region* stack = image.region(RegionKind::AppStack);
    for (const auto& s : out.samples) {
        if (!s.has_frame || !s.mapped) continue;
        if (!stack || !stack->contains(s.addr)) continue;
        if (s.addr < s.frame_base) continue;
        uint32_t off = s.addr - s.frame_base;
        if (s.is_write) profile.write_offsets[s.fn_entry].insert(off);
        else profile.read_offsets[s.fn_entry].insert(off);
    }
    return profile;
}

std::optional<Detection> sweep_profile_deviation(const std::vector<Rule>& rules,
                                                 const std::vector<AccessSample>& samples,
                                                 const MemoryImage& image,
                                                 const StackWriteProfile& profile,
                                                 const std::set<uint32_t>* immune_cells,
                                                 size_t* sample_index_out) {
    EvalContext ctx;
    ctx.profile = &profile;
    ctx.immune_cells = immune_cells;
    for (size_t i = 0; i < samples.size(); ++i) {
        auto det = evaluate(rules, samples[i], image, ctx);
        if (det) {
            if (sample_index_out) *sample_index_out = i;
            return det;
        }
    }
    return std::nullopt;
}

SimSession init_sim(const std::filesystem::path& manifest_path) {
    return init_sim(load_snapshot(manifest_path));
}

SimSession init_sim(MemoryImage image) {
    SimSession s;
    s.image = std::move(image);
    s.cpu.regs.pc() = s.image.app_entry;
    s.cpu.regs.sp() = s.image.initial_sp;
    s.cpu.regs.lr() = s.image.initial_lr;
    s.rules = parse_ruleset(default_ruleset_text());
    s.end = calc_end_addr(s);
    return s;
}

uint32_t calc_end_addr(const SimSession& session) {
    // the return site of the entry function is the lr captured at entry
    return session.image.initial_lr;
}

std::pair<uint32_t, bool> get_comparison_instruction(const CycleOutcome& outcome,
                                                     size_t detection_exec_index) {
    if (outcome.exec.empty() || detection_exec_index >= outcome.exec.size())
        return {0, false};
    uint32_t detection_pc = outcome.exec[detection_exec_index].pc;
    // walk the dynamic basic block backward: stop after crossing a branch
    for (size_t i = detection_exec_index + 1; i-- > 0;) {
        const ExecRecord& r = outcome.exec[i];
        if (i != detection_exec_index && r.branched) break;  // block boundary
        if (r.op == Op::Subs || r.op == Op::Cmp) return {r.pc, true};
    }
    return {detection_pc, false};
}

std::pair<uint32_t, uint32_t> get_nearest_app_block(const MemoryImage& image,
                                                    const std::set<uint32_t>& app_entries,
                                                    uint32_t fn_entry) {
    const Region* app = image.region(RegionKind::AppCode);
    if (!app) return {0, 0};
    if (!fn_entry || !app->contains(fn_entry)) return {app->base, app->end()};
    uint32_t start = fn_entry;
    uint32_t end = app->end();
    for (uint32_t e : app_entries)
        if (e > fn_entry && e < end && app->contains(e)) end = std::min(end, e);
    return {start, end};
}

bool check_range(const Ddg& ddg, uint32_t addr, uint32_t block_start, uint32_t block_end) {
    auto wpc = ddg.last_writer_pc(addr);
    return wpc.has_value() && *wpc >= block_start && *wpc < block_end;
}

RunAndDetectResult run_and_detect(SimSession& session) {
    RunAndDetectResult result;

    // profile first (when the snapshot carries benign inputs), then the
    // exploit cycle; deviation is checked over the recorded trace afterwards
    // so boundary violations keep detection priority
    bool want_profile = false;
    for (const auto& r : session.rules)
        for (const auto& t : r.terms)
            if (t.profile_deviation) want_profile = true;
    if (want_profile && !session.profile && !session.image.legit_input.empty())
        session.profile = build_profile(session.image, session.image.legit_input, session.budget);

    MemoryImage img = session.image;  // exploit input already installed at load
    CycleOptions opts;
    opts.budget = session.budget;
    opts.cycle_index = img.cycles_done;
    opts.rules = &session.rules;
    opts.ddg = &result.ddg;
    opts.stop_on_alert = true;

    CycleOutcome out = run_scan_cycle(img, opts);

    if (out.status == CycleStatus::Skipped) {
        result.verdict = RunVerdict::Skipped;
        result.outcome = std::move(out);
        return result;
    }
    if (out.status == CycleStatus::Budget) {
        throw BudgetExhaustedError("exploit run exhausted its step budget after " +
                                   std::to_string(out.steps) + " steps");
    }

    std::optional<Detection> detection = out.detection;
    size_t detection_exec_index = out.detection_exec_index;
    uint32_t frame_base = out.detection_frame_base;
    uint32_t fn_entry = out.detection_fn_entry;
    uint32_t call_branch = out.violating_call_branch_pc;

    if (!detection && session.profile) {
        size_t sample_idx = 0;
        auto dev = sweep_profile_deviation(session.rules, out.samples, img, *session.profile,
                                           nullptr, &sample_idx);
        if (dev) {
            detection = dev;
            detection_exec_index = out.sample_exec_index[sample_idx];
            frame_base = out.samples[sample_idx].frame_base;
            fn_entry = out.samples[sample_idx].fn_entry;
            // call into the callee performing the deviating write: recover it
            // from the frame data captured on the sample (the write itself may
            // sit in an imported function, reached from fn_entry's frame)
            call_branch = 0;
            for (size_t i = detection_exec_index + 1; i-- > 0;) {
                const ExecRecord& r = out.exec[i];
                if (r.op == Op::MovPcReg && r.branched && r.branch_target != 0 &&
                    r.pc >= fn_entry) {
                    const Region* app = img.region(RegionKind::AppCode);
                    if (app && app->contains(r.pc) &&
                        !(app->contains(r.branch_target))) {
                        call_branch = r.pc;
                        break;
                    }
                }
            }
        }
    }

    if (!detection) {
        if (out.status == CycleStatus::Fault)
            throw RehostError("scan cycle faulted without a rule detection (fault pc 0x" +
                              std::to_string(out.fault_pc) + ")");
        result.verdict = RunVerdict::Clean;
        result.outcome = std::move(out);
        return result;
    }

    auto [start_instr, comparison_found] = get_comparison_instruction(out, detection_exec_index);
    auto [block_start, block_end] = get_nearest_app_block(img, out.app_entries_seen, fn_entry);

    std::vector<uint32_t> candidates =
        result.ddg.dfs_localize(start_instr, block_start, block_end);

    size_t pick = session.candidate_index.value_or(0);
    if (pick >= candidates.size())
        throw LocalizationFailedError("candidate index " + std::to_string(pick) +
                                      " out of range (have " +
                                      std::to_string(candidates.size()) + ")");
    uint32_t chosen = candidates[pick];
    if (!check_range(result.ddg, chosen, block_start, block_end))
        throw LocalizationFailedError("chosen candidate failed the range check");

    LocalizationResult loc;
    loc.detection = *detection;
    loc.start_instr = start_instr;
    loc.comparison_found = comparison_found;
    loc.block_start = block_start;
    loc.block_end = block_end;
    loc.candidates = std::move(candidates);
    loc.chosen = chosen;
    loc.malicious_value = img.mapped_range(chosen, 4) ? img.read32(chosen) : 0;
    loc.app_frame_base = frame_base;
    loc.violating_call_branch_pc = call_branch;

    result.verdict = RunVerdict::Detected;
    result.localization = std::move(loc);
    result.outcome = std::move(out);
    return result;
}

}  // namespace plcpatch
