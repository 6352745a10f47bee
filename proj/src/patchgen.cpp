#include "plcpatch/patchgen.hpp"

#include <algorithm>

namespace plcpatch {

LiveBaseInfo LiveBaseInfo::self(const MemoryImage& img) {
    LiveBaseInfo info;
    for (const auto& r : img.regions()) info.bases[r.kind] = r.base;
    info.version = "dev";
    return info;
}

namespace {

uint32_t rebase(const MemoryImage& dev, const LiveBaseInfo& live, uint32_t addr,
                const char* what) {
    const Region* r = dev.find_region(addr);
    if (!r) throw RebaseFailedError(std::string("rebase: unmapped dev address for ") + what);
    auto it = live.bases.find(r->kind);
    if (it == live.bases.end())
        throw RebaseFailedError(std::string("rebase: live layout lacks region ") +
                                region_name(r->kind));
    return addr - r->base + it->second;
}

void check_structure(const MemoryImage& dev, const LiveBaseInfo& live) {
    for (const auto& r : dev.regions()) {
        if (!live.bases.count(r.kind))
            throw RebaseFailedError(std::string("live layout lacks region ") +
                                    region_name(r.kind));
        if (live.bases.at(r.kind) % 4 != 0)
            throw RebaseFailedError("live base not word-aligned");
    }
}

void put_u32(std::vector<uint8_t>& v, uint32_t x) {
    for (int i = 0; i < 4; ++i) v.push_back(uint8_t(x >> (8 * i)));
}

uint32_t get_u32(const std::vector<uint8_t>& v, size_t& off) {
    if (off + 4 > v.size()) throw PatchError("plan truncated");
    uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= uint32_t(v[off + size_t(i)]) << (8 * i);
    off += 4;
    return x;
}

}  // namespace

// ---------------------------------------------------------------------------
// Skeleton patches (docs/patches.md carries the annotated listings)
// ---------------------------------------------------------------------------

std::vector<Instruction> SkeletonPatch::materialize(const PatchParams& p) const {
    std::vector<Instruction> out;
    if (id == "bound_check") {
        // 13 instructions; pool word (BOUND_LIMIT) at +0x34
        out.push_back(str_imm(0, REG_SP, p.spill0_off));        // spill scratches
        out.push_back(str_imm(1, REG_SP, p.spill1_off));
        out.push_back(ldr_imm(0, REG_SP, p.cell_off));          // suspect parameter
        out.push_back(ldr_lit(1, 0x20));                        // bound limit
        out.push_back(cmp_reg(0, 1));
        out.push_back(branch(2, Cond::Lo));                     // in bounds: skip clamp
        out.push_back(str_imm(1, REG_SP, p.cell_off));          // clamp the cell
        out.push_back(ldr_imm(0, REG_SP, p.cell_off));          // effective value readback
        out.push_back(cmp_reg(0, 1));
        out.push_back(ldr_imm(6, REG_FP, p.orig_callee_off));   // intended callee
        out.push_back(ldr_imm(0, REG_SP, p.spill0_off));        // unspill
        out.push_back(ldr_imm(1, REG_SP, p.spill1_off));
        out.push_back(mov_pc_reg(6));                           // proceed to the callee
    } else if (id == "table_restore") {
        // 11 instructions; pool word (EXPECTED_WORD) at +0x2C
        out.push_back(str_imm(0, REG_SP, p.spill0_off));
        out.push_back(str_imm(1, REG_SP, p.spill1_off));
        out.push_back(ldr_lit(0, 0x1C));                        // known-good entry
        out.push_back(ldr_imm(1, REG_FP, p.table_entry_off));   // live entry
        out.push_back(cmp_reg(1, 0));
        out.push_back(str_imm(0, REG_FP, p.table_entry_off, Cond::Ne));  // heal
        out.push_back(ldr_imm(6, REG_FP, p.table_entry_off));   // callee via healed entry
        out.push_back(cmp_reg(6, 0));                           // integrity readback
        out.push_back(ldr_imm(0, REG_SP, p.spill0_off));
        out.push_back(ldr_imm(1, REG_SP, p.spill1_off));
        out.push_back(mov_pc_reg(6));
    } else {
        throw PatchError("unknown skeleton id: " + id);
    }
    if (out.size() != instruction_count) throw PatchError("skeleton instruction count drifted");
    return out;
}

std::vector<uint32_t> SkeletonPatch::pool(const PatchParams& p) const {
    if (id == "bound_check") return {p.bound_limit};
    if (id == "table_restore") return {p.expected_word};
    throw PatchError("unknown skeleton id: " + id);
}

const SkeletonPatch& skeleton(const std::string& patch_id) {
    static const SkeletonPatch bound{"bound_check", 13, 1};
    static const SkeletonPatch restore{"table_restore", 11, 1};
    if (patch_id == "bound_check") return bound;
    if (patch_id == "table_restore") return restore;
    throw PatchError("unknown patch identifier: " + patch_id);
}

// ---------------------------------------------------------------------------
// Site and slot search
// ---------------------------------------------------------------------------

uint32_t find_empty_patch_site(const MemoryImage& image, uint32_t patch_len) {
    const Region* app = image.region(RegionKind::AppCode);
    if (!app) throw NoEmptySiteError("no APP_CODE region");
    if (patch_len == 0 || patch_len > app->length)
        throw NoEmptySiteError("patch larger than the code region");
    // zeros-to-the-right suffix count makes the lowest-aligned-start scan O(n)
    std::vector<uint32_t> zrun(app->length + 1, 0);
    for (uint32_t off = app->length; off-- > 0;)
        zrun[off] = app->data[off] == 0 ? zrun[off + 1] + 1 : 0;
    for (uint32_t off = (4 - app->base % 4) % 4; off + patch_len <= app->length; off += 4)
        if (zrun[off] >= patch_len) return app->base + off;
    throw NoEmptySiteError("no zero gap large enough for the patch");
}

std::pair<uint32_t, uint32_t> find_empty_table_slot(const MemoryImage& image, uint32_t window) {
    const Region* table = image.region(RegionKind::AddressTable);
    if (!table) throw NoEmptySlotError("no ADDRESS_TABLE region");
    for (uint32_t off = 0; off + 4 <= table->length && off <= window; off += 4) {
        if (image.read32(table->base + off) == 0) {
            if (off > 0xFFF)
                throw OffsetUnencodableError("empty slot offset exceeds the ldr immediate");
            return {table->base + off, off};
        }
    }
    throw NoEmptySlotError("no empty 32-bit slot inside the scan window");
}

// ---------------------------------------------------------------------------
// Plan construction
// ---------------------------------------------------------------------------

namespace {

// The hook is the table-load feeding the violating call. The canonical call
// sequence places it 12 bytes before the `mov pc, r6`; tolerate small drift by
// scanning backward for the nearest `ldr r6, [fp, #imm]`.
uint32_t locate_hook_for_call(const MemoryImage& image, uint32_t call_branch_pc) {
    for (uint32_t back = 12; back <= 32; back += 4) {
        uint32_t pc = call_branch_pc - back;
        if (!image.mapped_range(pc, 4)) break;
        auto in = decode(image.read32(pc));
        if (in && in->op == Op::LdrImm && in->rd == 6 && in->rn == REG_FP) return pc;
    }
    throw PatchError("no table-load instruction found in the call sequence");
}

// For table_restore the hook guards the call that consumes the hijacked slot:
// the unique app-code `ldr r6, [fp, #slot_off]`.
uint32_t locate_hook_for_slot(const MemoryImage& image, uint32_t slot_off) {
    const Region* app = image.region(RegionKind::AppCode);
    if (!app) throw PatchError("no APP_CODE region");
    uint32_t found = 0;
    int count = 0;
    for (uint32_t off = 0; off + 4 <= app->length; off += 4) {
        auto in = decode(image.read32(app->base + off));
        if (in && in->op == Op::LdrImm && in->rd == 6 && in->rn == REG_FP &&
            in->imm == slot_off) {
            found = app->base + off;
            ++count;
        }
    }
    if (count == 0) throw PatchError("no call site loads the hijacked table entry");
    if (count > 1) throw PatchError("hijacked table entry is loaded from multiple sites");
    return found;
}

}  // namespace

PatchPlan build_patch(const LocalizationResult& loc, const std::string& patch_id,
                      const MemoryImage& image, const LiveBaseInfo& live, uint32_t bound_limit) {
    check_structure(image, live);
    const SkeletonPatch& sk = skeleton(patch_id);
    const Region* table = image.region(RegionKind::AddressTable);
    if (!table) throw PatchError("image lacks the address table region");

    const uint32_t patch_len = uint32_t(sk.byte_size());
    uint32_t site_dev = find_empty_patch_site(image, patch_len);
    auto [slot_dev, slot_off] = find_empty_table_slot(image);

    PatchParams params;
    // scratch spill slots: a fixed sp-relative window in the unused app-stack
    // zone above every live frame (the patch runs with sp at the callee frame
    // base, so sp + 0x700 sits far clear of frames and staging buffers)
    params.spill0_off = 0x700;
    params.spill1_off = 0x704;

    uint32_t hook_dev = 0;
    if (patch_id == "bound_check") {
        if (!loc.violating_call_branch_pc)
            throw PatchError("localization carries no call into the violating function");
        hook_dev = locate_hook_for_call(image, loc.violating_call_branch_pc);
        // sp at patch entry: the caller advanced its frame before branching;
        // read the advance from the call sequence itself
        auto adv = decode(image.read32(hook_dev + 4));
        if (!adv || adv->op != Op::Add || adv->rd != REG_SP || !adv->op2_is_imm)
            throw PatchError("call sequence lacks the frame advance after the hook");
        uint32_t sp_at_entry = loc.app_frame_base + adv->imm;
        const Region* stack = image.region(RegionKind::AppStack);
        if (!stack || !stack->contains(sp_at_entry + params.spill1_off + 3))
            throw OffsetUnencodableError("spill window leaves the app stack");
        if (loc.chosen < sp_at_entry || loc.chosen - sp_at_entry > 0xFFF)
            throw OffsetUnencodableError("target cell out of sp reach at patch entry");
        params.cell_off = loc.chosen - sp_at_entry;
        params.bound_limit = bound_limit;
    } else {
        uint32_t cell = loc.detection.violating_address;
        if (!table->contains(cell)) throw PatchError("violating address is not a table cell");
        uint32_t entry_off = cell - table->base;
        if (entry_off > 0xFFF)
            throw OffsetUnencodableError("hijacked entry out of fp reach");
        params.table_entry_off = entry_off;
        params.expected_word = rebase(image, live, image.read32(cell), "expected entry");
        hook_dev = locate_hook_for_slot(image, entry_off);
    }

    auto hook_in = decode(image.read32(hook_dev));
    if (!hook_in || hook_in->op != Op::LdrImm || hook_in->rd != 6 || hook_in->rn != REG_FP)
        throw PatchError("hook site does not decode to a table load");
    params.orig_callee_off = hook_in->imm;

    // encode with live addresses: the plan's bytes are what lands on the PLC
    std::vector<Instruction> body = sk.materialize(params);
    std::vector<uint8_t> bytes;
    for (const auto& in : body) put_u32(bytes, encode(in));
    for (uint32_t w : sk.pool(params)) put_u32(bytes, w);
    if (bytes.size() != patch_len) throw PatchError("patch byte size drifted from the skeleton");

    PatchPlan plan;
    plan.patch_id = patch_id;
    plan.patch_bytes = std::move(bytes);
    plan.patch_addr = rebase(image, live, site_dev, "patch site");
    plan.table_slot_addr = rebase(image, live, slot_dev, "table slot");
    plan.table_slot_value = plan.patch_addr;
    plan.hook_addr = rebase(image, live, hook_dev, "hook");
    plan.hook_old_word = image.read32(hook_dev);
    plan.hook_new_word = encode(ldr_imm(6, REG_FP, slot_off, hook_in->cond));
    plan.total_bytes = patch_len + 4 + 4;
    plan.bound_limit = bound_limit;
    if (patch_id == "bound_check")
        plan.target_cell = rebase(image, live, loc.chosen, "target cell");
    else
        plan.table_entry_addr = rebase(image, live, loc.detection.violating_address, "entry cell");
    return plan;
}

// ---------------------------------------------------------------------------
// Serialization: fixed field order, little-endian, raw bytes trail
// ---------------------------------------------------------------------------

std::vector<uint8_t> PatchPlan::serialize() const {
    std::vector<uint8_t> out;
    put_u32(out, 0x50504C43);  // 'CLPP'
    put_u32(out, 1);           // version
    uint32_t kind = patch_id == "bound_check" ? 1 : 2;
    put_u32(out, kind);
    put_u32(out, patch_addr);
    put_u32(out, table_slot_addr);
    put_u32(out, table_slot_value);
    put_u32(out, hook_addr);
    put_u32(out, hook_old_word);
    put_u32(out, hook_new_word);
    put_u32(out, total_bytes);
    put_u32(out, target_cell);
    put_u32(out, table_entry_addr);
    put_u32(out, bound_limit);
    put_u32(out, uint32_t(patch_bytes.size()));
    out.insert(out.end(), patch_bytes.begin(), patch_bytes.end());
    return out;
}

PatchPlan PatchPlan::deserialize(const std::vector<uint8_t>& bytes) {
    size_t off = 0;
    if (get_u32(bytes, off) != 0x50504C43) throw PatchError("bad plan magic");
    if (get_u32(bytes, off) != 1) throw PatchError("unsupported plan version");
    PatchPlan p;
    uint32_t kind = get_u32(bytes, off);
    p.patch_id = kind == 1 ? "bound_check" : "table_restore";
    p.patch_addr = get_u32(bytes, off);
    p.table_slot_addr = get_u32(bytes, off);
    p.table_slot_value = get_u32(bytes, off);
    p.hook_addr = get_u32(bytes, off);
    p.hook_old_word = get_u32(bytes, off);
    p.hook_new_word = get_u32(bytes, off);
    p.total_bytes = get_u32(bytes, off);
    p.target_cell = get_u32(bytes, off);
    p.table_entry_addr = get_u32(bytes, off);
    p.bound_limit = get_u32(bytes, off);
    uint32_t n = get_u32(bytes, off);
    if (off + n > bytes.size()) throw PatchError("plan truncated");
    p.patch_bytes.assign(bytes.begin() + long(off), bytes.begin() + long(off + n));
    return p;
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

const char* patch_check_name(PatchCheck c) {
    switch (c) {
        case PatchCheck::UnboundedLoop: return "unbounded-loop";
        case PatchCheck::DangerousInstruction: return "dangerous-instruction";
        case PatchCheck::OutOfRangeWrite: return "out-of-range-write";
        case PatchCheck::RulesetViolation: return "ruleset-violation";
    }
    return "?";
}

void apply_plan(MemoryImage& image, const PatchPlan& plan) {
    for (size_t i = 0; i < plan.patch_bytes.size(); ++i)
        image.write8(plan.patch_addr + uint32_t(i), plan.patch_bytes[i]);
    image.write32(plan.table_slot_addr, plan.table_slot_value);
    image.write32(plan.hook_addr, plan.hook_new_word);
}

namespace {

// Static screen over the patch body: stack-state manipulation and writes to
// the link register are out of bounds for a patch; the single terminal
// indirect branch is the documented control transfer.
bool has_dangerous_instruction(const PatchPlan& plan, size_t instr_count) {
    for (size_t i = 0; i < instr_count; ++i) {
        uint32_t w = 0;
        for (int b = 3; b >= 0; --b) w = (w << 8) | plan.patch_bytes[i * 4 + size_t(b)];
        auto in = decode(w);
        if (!in) return true;
        bool last = i + 1 == instr_count;
        switch (in->op) {
            case Op::MovPcReg:
                if (!last) return true;
                break;
            case Op::MovImm:
            case Op::MovReg:
            case Op::Add:
            case Op::Sub:
            case Op::Subs:
                if (in->rd == REG_SP || in->rd == REG_LR) return true;
                break;
            case Op::LdrImm:
            case Op::LdrLit:
                if (in->rd == REG_SP || in->rd == REG_LR) return true;
                break;
            case Op::Ldm:
                if (in->reglist & ((1u << REG_SP) | (1u << REG_LR))) return true;
                if (in->writeback && (in->rn == REG_SP || in->rn == REG_LR)) return true;
                break;
            case Op::Stm:
                if (in->writeback && (in->rn == REG_SP || in->rn == REG_LR)) return true;
                break;
            default:
                break;
        }
    }
    return false;
}

}  // namespace

VerificationReport verify_patch(const MemoryImage& image, const PatchPlan& plan,
                                const std::vector<uint8_t>& exploit_input,
                                const std::vector<uint8_t>& legit_input,
                                const std::vector<Rule>& rules, uint64_t budget) {
    VerificationReport report;

    size_t instr_count = skeleton(plan.patch_id).instruction_count;
    if (has_dangerous_instruction(plan, instr_count))
        report.violated.push_back(PatchCheck::DangerousInstruction);

    MemoryImage patched = image;
    apply_plan(patched, plan);
    patched.install_mmio_input(exploit_input);

    std::set<uint32_t> immune;
    if (plan.patch_id == "table_restore") immune.insert(plan.table_entry_addr);

    CycleOptions opts;
    opts.budget = budget;
    opts.cycle_index = patched.cycles_done;
    opts.rules = &rules;
    opts.immune_cells = &immune;
    opts.stop_on_alert = true;
    CycleOutcome out = run_scan_cycle(patched, opts);
    report.steps_executed = out.steps;
    report.warns = out.warns;

    if (out.status == CycleStatus::Budget)
        report.violated.push_back(PatchCheck::UnboundedLoop);
    if (out.status == CycleStatus::Fault)
        report.violated.push_back(PatchCheck::DangerousInstruction);
    if (out.detection) report.violated.push_back(PatchCheck::RulesetViolation);

    // every write the patch body performed must stay inside the permitted
    // regions (plus the healed table cell for restore plans)
    uint32_t p_lo = plan.patch_addr, p_hi = plan.patch_addr + uint32_t(plan.patch_bytes.size());
    for (const auto& s : out.samples) {
        if (!s.is_write || s.pc < p_lo || s.pc >= p_hi) continue;
        if (plan.patch_id == "table_restore" && s.addr == plan.table_entry_addr) continue;
        auto k = patched.try_classify(s.addr);
        bool ok = k && (*k == RegionKind::AppStack || *k == RegionKind::Data ||
                        *k == RegionKind::Mmio);
        if (!ok) {
            report.violated.push_back(PatchCheck::OutOfRangeWrite);
            break;
        }
    }

    // instruction overhead of the patch on the benign path
    if (!legit_input.empty() && out.status != CycleStatus::Budget) {
        MemoryImage plain = image;
        plain.install_mmio_input(legit_input);
        MemoryImage with_patch = image;
        apply_plan(with_patch, plan);
        with_patch.install_mmio_input(legit_input);
        CycleOptions lopts;
        lopts.budget = budget;
        lopts.cycle_index = image.cycles_done;
        lopts.record_exec = false;
        CycleOutcome a = run_scan_cycle(plain, lopts);
        CycleOutcome b = run_scan_cycle(with_patch, lopts);
        if (a.status == CycleStatus::End && b.status == CycleStatus::End)
            report.instruction_overhead = int64_t(b.steps) - int64_t(a.steps);
    }

    std::sort(report.violated.begin(), report.violated.end());
    report.violated.erase(std::unique(report.violated.begin(), report.violated.end()),
                          report.violated.end());
    report.safe = report.violated.empty();
    return report;
}

}  // namespace plcpatch
