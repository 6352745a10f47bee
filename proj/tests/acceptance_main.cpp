// Acceptance suite: exercises every exit criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <queue>
#include <random>
#include <set>
#include <thread>

#include "plcpatch/assembler.hpp"
#include "plcpatch/corpus.hpp"
#include "plcpatch/patch_client.hpp"
#include "plcpatch/patch_server.hpp"
#include "plcpatch/pipeline.hpp"
#include "plcpatch/plc.hpp"
#include "plcpatch/snapshot.hpp"

using namespace plcpatch;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int criterion, const char* name, bool pass, const std::string& detail = "") {
    printf("%s  criterion %d: %s%s%s\n", pass ? "PASS" : "FAIL", criterion, name,
           detail.empty() ? "" : " -- ", detail.c_str());
    if (!pass) ++failures;
}

PatchPlan plan_for(const CorpusBinary& bin) {
    SimSession s = init_sim(bin.image);
    s.candidate_index = bin.gt.candidate_index;
    auto r = run_and_detect(s);
    if (!r.localization) throw std::runtime_error("localization failed for " + bin.gt.name);
    return build_patch(*r.localization, bin.gt.patch_id, bin.image,
                       LiveBaseInfo::self(bin.image), bin.gt.bound_limit);
}

// --- criterion 1: 100% localization over the seed-0 corpus, under 2 minutes
void criterion_1_localization(const std::vector<CorpusBinary>& corpus,
                              const BatchSummary& batch, double batch_seconds) {
    bool size_ok = corpus.size() >= 20;
    std::set<int> cwes;
    for (const auto& b : corpus) cwes.insert(b.gt.cwe);
    bool cwe_ok = cwes == std::set<int>{20, 78, 125, 787};
    bool all_localized = batch.localized_exact == batch.total && batch.total == corpus.size();
    bool time_ok = batch_seconds < 120.0;
    char buf[160];
    snprintf(buf, sizeof(buf), "localized %zu/%zu ground-truth cells exactly in %.1fs",
             batch.localized_exact, batch.total, batch_seconds);
    report(1, "localization rate 100% on the generated corpus",
           size_ok && cwe_ok && all_localized && time_ok, buf);
}

// --- criterion 2: footprints exactly 64 (bound check) / 56 (restore)
void criterion_2_footprint(const std::vector<CorpusBinary>& corpus) {
    bool ok = true;
    std::string detail;
    for (const auto& bin : corpus) {
        PatchPlan plan = plan_for(bin);
        uint32_t expect = bin.gt.patch_id == "bound_check" ? 64 : 56;
        if (plan.total_bytes != expect) {
            ok = false;
            detail = bin.gt.name + " footprint " + std::to_string(plan.total_bytes);
            break;
        }
    }
    report(2, "patch footprint exactly 64/56 bytes by weakness class", ok, detail);
}

// --- criterion 3: neutralization and output correctness
void criterion_3_neutralization(const std::vector<CorpusBinary>& corpus) {
    bool a_ok = true, b_ok = true, c_ok = true;
    std::string detail;
    for (const auto& bin : corpus) {
        PatchPlan plan = plan_for(bin);

        // (a) unpatched + exploit: crash latch or alert within one cycle
        {
            MemoryImage img = bin.image;
            MonitorConfig mon;
            mon.rules = parse_ruleset(default_ruleset_text());
            mon.profile = build_profile(bin.image, bin.gt.legit_input);
            RunCyclesOptions opts;
            opts.monitor = &mon;
            auto res = run_cycles(img, 1, constant_input(bin.gt.exploit_input), opts);
            if (res.empty() || (!res[0].crashed && res[0].rule_alerts.empty())) {
                a_ok = false;
                detail = bin.gt.name + " (a)";
            }
        }
        // (b) patched + exploit: ten cycles, zero alerts, no crash
        {
            MemoryImage img = bin.image;
            apply_plan(img, plan);
            MonitorConfig mon;
            mon.rules = parse_ruleset(default_ruleset_text());
            mon.profile = build_profile(img, bin.gt.legit_input);
            if (plan.patch_id == "table_restore") mon.immune_cells.insert(plan.table_entry_addr);
            RunCyclesOptions opts;
            opts.monitor = &mon;
            auto res = run_cycles(img, 10, constant_input(bin.gt.exploit_input), opts);
            if (res.size() != 10) b_ok = false;
            for (const auto& r : res)
                if (r.crashed || !r.rule_alerts.empty()) {
                    b_ok = false;
                    detail = bin.gt.name + " (b)";
                }
        }
        // (c) patched + legit: fifty cycles byte-identical to unpatched
        {
            MemoryImage plain = bin.image;
            MemoryImage patched = bin.image;
            apply_plan(patched, plan);
            auto x = run_cycles(plain, 50, constant_input(bin.gt.legit_input));
            auto y = run_cycles(patched, 50, constant_input(bin.gt.legit_input));
            if (x.size() != y.size()) c_ok = false;
            for (size_t i = 0; i < x.size() && i < y.size(); ++i)
                if (x[i].outputs != y[i].outputs || y[i].crashed) {
                    c_ok = false;
                    detail = bin.gt.name + " (c) cycle " + std::to_string(i);
                }
        }
    }
    report(3, "exploit neutralized and legitimate outputs byte-identical", a_ok && b_ok && c_ok,
           detail);
}

// --- criterion 4: patched legit cycles cost at most 20 extra instructions
void criterion_4_overhead(const std::vector<CorpusBinary>& corpus) {
    bool ok = true;
    std::string detail;
    int64_t worst = 0;
    for (const auto& bin : corpus) {
        PatchPlan plan = plan_for(bin);
        MemoryImage plain = bin.image;
        MemoryImage patched = bin.image;
        apply_plan(patched, plan);
        auto x = run_cycles(plain, 3, constant_input(bin.gt.legit_input));
        auto y = run_cycles(patched, 3, constant_input(bin.gt.legit_input));
        for (size_t i = 0; i < x.size(); ++i) {
            int64_t delta = int64_t(y[i].steps) - int64_t(x[i].steps);
            worst = std::max(worst, delta);
            if (delta > 20) {
                ok = false;
                detail = bin.gt.name + " overhead " + std::to_string(delta);
            }
        }
    }
    if (ok) detail = "worst per-cycle delta " + std::to_string(worst) + " instructions";
    report(4, "per-cycle instruction overhead at most 20", ok, detail);
}

// --- criterion 5: schedule-fuzzed hook-write linearizability, 10k cycles
void criterion_5_atomic_hook(const std::vector<CorpusBinary>& corpus) {
    const CorpusBinary* target = nullptr;
    for (const auto& b : corpus)
        if (b.gt.imported_fn == "MemCpy" && b.gt.cwe == 787) target = &b;
    if (!target) {
        report(5, "atomic hook write linearizability", false, "no target binary");
        return;
    }
    PatchPlan plan = plan_for(*target);
    MemoryImage staged = target->image;
    for (size_t i = 0; i < plan.patch_bytes.size(); ++i)
        staged.write8(plan.patch_addr + uint32_t(i), plan.patch_bytes[i]);
    staged.write32(plan.table_slot_addr, plan.table_slot_value);

    std::mt19937 rng(4242);
    uint64_t interleaved_cycles = 0;
    uint64_t torn = 0, swap_failures = 0, patch_path_misses = 0;
    const int ROUNDS = 140, CYCLES = 72;

    for (int round = 0; round < ROUNDS; ++round) {
        SharedPlc plc(staged);
        std::vector<uint32_t> fetches;
        std::atomic<bool> swapped{false};
        std::atomic<uint64_t> done{0};
        std::atomic<uint64_t> post_miss{0};

        std::thread emulator([&] {
            for (int c = 0; c < CYCLES; ++c) {
                bool after_swap = swapped.load();
                auto stats = plc.run_one_cycle(uint64_t(c), target->gt.legit_input, 200000,
                                               &fetches, plan.hook_addr, plan.patch_addr);
                if (stats.crashed) break;
                if (after_swap && !stats.executed_addr) post_miss.fetch_add(1);
                done.fetch_add(1);
            }
        });
        for (int spin = int(rng() % 500); spin > 0; --spin) std::this_thread::yield();
        if (!plc.atomic_hook_write(plan.hook_addr, plan.hook_old_word, plan.hook_new_word))
            ++swap_failures;
        swapped.store(true);
        emulator.join();

        auto post = plc.run_one_cycle(uint64_t(CYCLES), target->gt.legit_input, 200000, &fetches,
                                      plan.hook_addr, plan.patch_addr);
        if (!post.executed_addr || post.crashed) ++patch_path_misses;
        for (uint32_t w : fetches)
            if (w != plan.hook_old_word && w != plan.hook_new_word) ++torn;
        patch_path_misses += post_miss.load();
        interleaved_cycles += done.load() + 1;
    }
    char buf[160];
    snprintf(buf, sizeof(buf),
             "%llu interleaved cycles, %llu torn fetches, %llu swap failures, %llu path misses",
             (unsigned long long)interleaved_cycles, (unsigned long long)torn,
             (unsigned long long)swap_failures, (unsigned long long)patch_path_misses);
    report(5, "atomic hook write: no torn fetch across 10k interleaved cycles",
           interleaved_cycles >= 10000 && torn == 0 && swap_failures == 0 &&
               patch_path_misses == 0,
           buf);
}

// --- criterion 6: closed-loop case study, attack at cycle 100
void criterion_6_case_study(const std::vector<CorpusBinary>& corpus) {
    const CorpusBinary* study = nullptr;
    for (const auto& b : corpus)
        if (b.gt.sector == "desalination_plant" && b.gt.imported_fn == "MemCpy" &&
            b.gt.cwe == 787)
            study = &b;
    if (!study) {
        report(6, "closed-loop case study", false, "no desalination sample");
        return;
    }
    PatchPlan plan = plan_for(*study);
    MemoryImage patched = study->image;
    apply_plan(patched, plan);

    ClosedLoopAttack attack;
    attack.cycle = 100;
    attack.offset = 8;
    attack.bytes.assign(study->gt.exploit_input.begin() + 8,
                        study->gt.exploit_input.begin() + 12);

    ProcessModel plant;
    auto baseline = closed_loop(study->image, plant, 160, study->gt.legit_input, std::nullopt);
    auto attacked = closed_loop(study->image, plant, 160, study->gt.legit_input, attack);
    auto defended = closed_loop(patched, plant, 160, study->gt.legit_input, attack);

    bool pre_equal = true;
    for (size_t i = 0; i < 100; ++i)
        if (attacked.distillate[i] != baseline.distillate[i]) pre_equal = false;
    bool unpatched_deviates = false;
    for (size_t i = 100; i < 160; ++i)
        if (attacked.distillate[i] != baseline.distillate[i]) unpatched_deviates = true;
    bool unpatched_crashed = attacked.crashed[100];
    bool patched_exact = defended.distillate == baseline.distillate &&
                         defended.brine_temp == baseline.brine_temp;
    bool patched_alive = true;
    for (bool c : defended.crashed)
        if (c) patched_alive = false;

    report(6, "attack at cycle 100: unpatched trace deviates, patched equals baseline",
           pre_equal && unpatched_deviates && unpatched_crashed && patched_exact && patched_alive);
}

// --- criterion 7: property suites
bool prop_decode_encode() {
    const Cond conds[] = {Cond::Eq, Cond::Ne, Cond::Hs, Cond::Lo, Cond::Ge, Cond::Lt, Cond::Al};
    uint64_t count = 0;
    auto chk = [&](const Instruction& in) {
        auto back = decode(encode(in));
        if (!back || !(*back == in)) throw std::runtime_error("round-trip mismatch");
        ++count;
    };
    try {
        for (Cond c : conds) {
            for (uint8_t rd = 0; rd < 15; ++rd) {
                for (uint32_t imm = 0; imm < 256; ++imm) chk(mov_imm(rd, imm, c));
                for (uint8_t rm = 0; rm < 16; ++rm) chk(mov_reg(rd, rm, c));
            }
            for (uint8_t rm = 0; rm < 15; ++rm) chk(mov_pc_reg(rm, c));
            for (uint8_t rd = 0; rd < 15; rd += 2)
                for (uint8_t rn = 0; rn < 15; rn += 2)
                    for (uint32_t imm = 0; imm < 256; imm += 15) {
                        chk(add_imm(rd, rn, imm, c));
                        chk(subs_imm(rd, rn, imm, c));
                    }
            for (uint8_t rd = 0; rd < 15; rd += 3)
                for (uint8_t rn = 0; rn < 15; rn += 3)
                    for (uint32_t imm = 0; imm <= 0xFFF; imm += 0x3F) {
                        chk(ldr_imm(rd, rn, imm, c));
                        chk(str_imm(rd, rn, imm, c));
                    }
            for (uint8_t rn = 0; rn < 13; ++rn)
                for (uint16_t list : {uint16_t(1), uint16_t(0xFF), uint16_t(0x2AAA)}) {
                    chk(stm(rn, list, false, c));
                    if (!(list & (1u << rn))) chk(ldm(rn, list, true, c));
                }
            for (int32_t off : {-(1 << 23), -1, 0, (1 << 23) - 1}) chk(branch(off, c));
        }
        // decode strictness: random words re-encode exactly or reject
        std::mt19937 rng(7);
        for (int i = 0; i < 200000; ++i) {
            uint32_t w = rng();
            auto d = decode(w);
            if (d && encode(*d) != w) throw std::runtime_error("strictness violation");
        }
    } catch (const std::exception&) {
        return false;
    }
    return count > 50000;
}

bool prop_dfs_oracle() {
    std::mt19937 rng(1234);
    auto mem_write = [](uint32_t pc, uint32_t addr) {
        TraceEvent e;
        e.pc = pc;
        e.kind = EventKind::MemWrite;
        e.addr = addr;
        return e;
    };
    auto mem_read = [](uint32_t pc, uint32_t addr) {
        TraceEvent e;
        e.pc = pc;
        e.kind = EventKind::MemRead;
        e.addr = addr;
        return e;
    };
    auto reg_write = [](uint32_t pc, uint8_t reg, uint8_t src) {
        TraceEvent e;
        e.pc = pc;
        e.kind = EventKind::RegWrite;
        e.reg = reg;
        e.src_regs[0] = src;
        e.n_srcs = 1;
        return e;
    };
    int with_candidates = 0;
    for (int trial = 0; trial < 500; ++trial) {
        Ddg g;
        std::vector<uint32_t> pcs;
        int n = 5 + int(rng() % 40);
        for (int i = 0; i < n; ++i) {
            uint32_t pc = 0x1000 + (rng() % 10) * 4;
            pcs.push_back(pc);
            switch (rng() % 3) {
                case 0: g.record(mem_write(pc, 0x8000 + (rng() % 8) * 4)); break;
                case 1: g.record(mem_read(pc, 0x8000 + (rng() % 8) * 4)); break;
                default: g.record(reg_write(pc, uint8_t(rng() % 6), uint8_t(rng() % 6))); break;
            }
        }
        if (g.nodes().size() > 30) continue;
        uint32_t start = pcs[rng() % pcs.size()];
        uint32_t bs = 0x1000, be = 0x1028;

        std::set<uint32_t> expect;
        auto sid = g.instr_node(start);
        if (!sid) continue;
        std::set<NodeId> reach{*sid};
        std::queue<NodeId> q;
        q.push(*sid);
        while (!q.empty()) {
            NodeId cur = q.front();
            q.pop();
            for (const auto& e : g.edges())
                if (e.to == cur && !reach.count(e.from)) {
                    reach.insert(e.from);
                    q.push(e.from);
                }
        }
        for (NodeId id : reach) {
            const DdgNode& node = g.node(id);
            if (node.kind != DdgNodeKind::Memory) continue;
            auto w = g.last_writer_pc(node.addr);
            if (w && *w >= bs && *w < be) expect.insert(node.addr);
        }

        try {
            auto got = g.dfs_localize(start, bs, be);
            std::set<uint32_t> got_set(got.begin(), got.end());
            if (got_set != expect) return false;
            if (g.dfs_localize(start, bs, be) != got) return false;
            ++with_candidates;
        } catch (const NoCandidateError&) {
            if (!expect.empty()) return false;
        }
    }
    return with_candidates > 50;
}

bool prop_snapshot_roundtrip(const std::vector<CorpusBinary>& corpus) {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "plcpatch_acceptance_rt";
    fs::remove_all(dir);
    for (size_t i = 0; i < corpus.size(); i += 5) {
        fs::path sub = dir / corpus[i].gt.name;
        fs::path manifest = dump_snapshot(corpus[i].image, sub);
        MemoryImage back = load_snapshot(manifest);
        if (!(back == corpus[i].image)) return false;
    }
    return true;
}

bool prop_wire_roundtrip() {
    std::mt19937 rng(77);
    for (int i = 0; i < 3000; ++i) {
        WireMessage m;
        switch (i % 7) {
            case 0: m.type = MsgType::Hello; break;
            case 1: m.type = MsgType::GetBaseAddr; break;
            case 2:
                m.type = MsgType::VerifyMem;
                m.addr = rng();
                m.bytes.resize(rng() % 64);
                for (auto& b : m.bytes) b = uint8_t(rng());
                break;
            case 3:
                m.type = MsgType::WriteMem;
                m.addr = rng();
                m.bytes.resize(rng() % 64);
                for (auto& b : m.bytes) b = uint8_t(rng());
                break;
            case 4:
                m.type = MsgType::WriteHookAtomic;
                m.addr = rng();
                m.expected_word = rng();
                m.new_word = rng();
                break;
            case 5:
                m.type = MsgType::Ok;
                m.bytes.resize(rng() % 32);
                break;
            default:
                m.type = MsgType::Err;
                m.err_code = uint8_t(rng() % 4);
                m.err_msg = std::string(rng() % 16, 'e');
                break;
        }
        auto frame = encode_frame(m);
        size_t consumed = 0;
        auto back = decode_frame(frame, consumed);
        if (!back || !(*back == m) || consumed != frame.size()) return false;
    }
    return true;
}

bool prop_verify_before_write(const std::vector<CorpusBinary>& corpus) {
    const CorpusBinary* bin = nullptr;
    for (const auto& b : corpus)
        if (b.gt.cwe == 787 && b.gt.imported_fn == "SysMemSet") bin = &b;
    if (!bin) return false;
    PatchPlan plan = plan_for(*bin);

    // pre-dirty each step's target in turn; later targets must stay inert
    for (int step = 1; step <= 3; ++step) {
        MemoryImage img = bin->image;
        if (step == 1) img.write8(plan.patch_addr + 3, 0x55);
        if (step == 2) img.write32(plan.table_slot_addr, 0x11111111);
        if (step == 3) img.write32(plan.hook_addr, plan.hook_old_word ^ 0x10);

        SharedPlc plc(img);
        PatchServer server(plc);
        uint16_t port = server.start(0);
        PatchClient client;
        client.connect("localhost", port);
        DeployOutcome out = client.deploy(plan);
        bool aborted_right =
            out.aborted_at.has_value() && int(*out.aborted_at) == step && !out.hook_written;
        MemoryImage after = plc.clone_image();
        bool hook_untouched = after.read32(plan.hook_addr) == img.read32(plan.hook_addr);
        client.close();
        server.stop();
        if (!aborted_right || !hook_untouched) return false;
    }
    return true;
}

void criterion_7_properties(const std::vector<CorpusBinary>& corpus) {
    bool a = prop_decode_encode();
    bool b = prop_dfs_oracle();
    bool c = prop_snapshot_roundtrip(corpus);
    bool d = prop_wire_roundtrip();
    bool e = prop_verify_before_write(corpus);
    std::string detail;
    if (!a) detail += "decode/encode ";
    if (!b) detail += "dfs-oracle ";
    if (!c) detail += "snapshot-roundtrip ";
    if (!d) detail += "wire-roundtrip ";
    if (!e) detail += "verify-before-write ";
    report(7, "property suites: codec round-trips, DFS oracle, abort discipline",
           a && b && c && d && e, detail);
}

}  // namespace

int main() {
    auto t0 = Clock::now();
    std::vector<CorpusBinary> corpus = generate_corpus(0);

    auto batch_t0 = Clock::now();
    E2eOptions opts;
    BatchSummary batch = run_batch(corpus, opts);
    double batch_seconds = std::chrono::duration<double>(Clock::now() - batch_t0).count();

    criterion_1_localization(corpus, batch, batch_seconds);
    criterion_2_footprint(corpus);
    criterion_3_neutralization(corpus);
    criterion_4_overhead(corpus);
    criterion_5_atomic_hook(corpus);
    criterion_6_case_study(corpus);
    criterion_7_properties(corpus);

    // the batch itself must have succeeded end to end as well
    report(1, "e2e batch success on every binary (deploy included)",
           batch.succeeded == batch.total,
           std::to_string(batch.succeeded) + "/" + std::to_string(batch.total));

    double total = std::chrono::duration<double>(Clock::now() - t0).count();
    printf("%s (%d criterion failures, %.1fs total)\n", failures == 0 ? "ACCEPTED" : "REJECTED",
           failures, total);
    return failures == 0 ? 0 : 1;
}
