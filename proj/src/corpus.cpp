#include "plcpatch/corpus.hpp"

#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "plcpatch/assembler.hpp"
#include "plcpatch/snapshot.hpp"

namespace plcpatch {

namespace {

using L = CorpusLayout;

std::string hexs(uint32_t v) {
    std::ostringstream os;
    os << "0x" << std::hex << v;
    return os.str();
}

// MMIO input window layout:
//   +0 sensor a   +4 sensor b   +8 transfer size   +12 aux (offset/index)
std::vector<uint8_t> input_words(uint32_t a, uint32_t b, uint32_t size, uint32_t aux) {
    std::vector<uint8_t> out(16);
    uint32_t w[4] = {a, b, size, aux};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) out[i * 4 + j] = uint8_t(w[i] >> (8 * j));
    return out;
}

}  // namespace

const std::vector<std::string>& imported_fn_names() {
    static const std::vector<std::string> names = {"SysMemSet", "SysMemMove", "SysMemCpy",
                                                   "MemSet",    "MemCpy",     "BitCpy"};
    return names;
}

std::string imported_fn_source(const std::string& name) {
    // Same idiom everywhere: bound in a register, subs decrement, conditional
    // block store, and no bound check anywhere.
    if (name == "MemCpy")
        return R"(MemCpy:
    str   lr, [sp, #0]
    str   fp, [sp, #4]
    ldr   r0, [sp, #8]
    ldr   r1, [sp, #12]
    ldr   r2, [sp, #16]
MemCpy.copy:
    subs  r2, r2, #4
    ldrhs r3, [r1]
    addhs r1, r1, #4
    stmhs r0!, {r3}
    bhs   MemCpy.copy
    ldr   fp, [sp, #4]
    ldr   lr, [sp, #0]
    mov   pc, lr
)";
    if (name == "SysMemCpy")
        return R"(SysMemCpy:
    str   lr, [sp, #0]
    str   fp, [sp, #4]
    ldr   r4, [sp, #8]
    ldr   r5, [sp, #12]
    ldr   r8, [sp, #16]
SysMemCpy.copy:
    subs  r8, r8, #4
    ldrhs r7, [r5]
    addhs r5, r5, #4
    stmhs r4!, {r7}
    bhs   SysMemCpy.copy
    ldr   fp, [sp, #4]
    ldr   lr, [sp, #0]
    mov   pc, lr
)";
    if (name == "SysMemMove")
        return R"(SysMemMove:
    str   lr, [sp, #0]
    str   fp, [sp, #4]
    ldr   r0, [sp, #8]
    ldr   r1, [sp, #12]
    ldr   r2, [sp, #16]
    cmp   r0, r1
SysMemMove.fwd:
    subs  r2, r2, #4
    ldrhs r3, [r1]
    addhs r1, r1, #4
    stmhs r0!, {r3}
    bhs   SysMemMove.fwd
    ldr   fp, [sp, #4]
    ldr   lr, [sp, #0]
    mov   pc, lr
)";
    if (name == "MemSet")
        return R"(MemSet:
    str   lr, [sp, #0]
    str   fp, [sp, #4]
    ldr   r0, [sp, #8]
    ldr   r3, [sp, #12]
    ldr   r2, [sp, #16]
MemSet.fill:
    subs  r2, r2, #4
    stmhs r0!, {r3}
    bhs   MemSet.fill
    ldr   fp, [sp, #4]
    ldr   lr, [sp, #0]
    mov   pc, lr
)";
    if (name == "SysMemSet")
        return R"(SysMemSet:
    str   lr, [sp, #0]
    str   fp, [sp, #4]
    ldr   r4, [sp, #8]
    ldr   r10, [sp, #12]
    ldr   r9, [sp, #16]
SysMemSet.fill:
    subs  r9, r9, #4
    stmhs r4!, {r10}
    bhs   SysMemSet.fill
    ldr   fp, [sp, #4]
    ldr   lr, [sp, #0]
    mov   pc, lr
)";
    if (name == "BitCpy")
        // blits a caller-controlled size at a caller-controlled offset between
        // the fixed staging windows; end-pointer loop, still unchecked
        return R"(BitCpy:
    str   lr, [sp, #0]
    str   fp, [sp, #4]
    ldr   r2, [sp, #8]
    ldr   r3, [sp, #12]
    ldr   r0, =BITCPY_DST
    ldr   r1, =BITCPY_SRC
    add   r0, r0, r3
    add   r4, r0, r2
BitCpy.blit:
    subs  r5, r4, r0
    ldrne r7, [r1]
    addne r1, r1, #4
    stmne r0!, {r7}
    bne   BitCpy.blit
    ldr   fp, [sp, #4]
    ldr   lr, [sp, #0]
    mov   pc, lr
.pool
)";
    throw std::runtime_error("unknown imported function: " + name);
}

namespace {

struct Shape {
    std::string name;
    std::string sector;
    std::string fn;  // imported fn or "array_index"
    int cwe = 0;
    bool deep_call = false;  // PLC_PRG -> Stage -> imported
    uint32_t cap = 16;       // destination capacity in bytes
    uint32_t pad_words = 0;  // structural jitter in the locals zone
};

struct BuildOut {
    MemoryImage image;
    GroundTruth gt;
};

constexpr uint32_t ENTRY_SZ = 0x10;
constexpr uint32_t OUTER_SZ = 0x20;

BuildOut build_binary(const Shape& sh) {
    const bool is_copy = sh.fn == "MemCpy" || sh.fn == "SysMemCpy" || sh.fn == "SysMemMove";
    const bool is_set = sh.fn == "MemSet" || sh.fn == "SysMemSet";
    const bool is_bit = sh.fn == "BitCpy";
    const bool is_arr = sh.fn == "array_index";
    const bool copy_into_table = sh.cwe == 78 && is_copy;

    // Fixed staging windows in the upper app stack. Overflow sweeps start
    // here, far above every live frame, so frames and parameter cells are
    // never corrupted before the boundary violation fires.
    const uint32_t STAGE_DST_LOW = L::APP_STACK_BASE + 0xA00;
    const uint32_t STAGE_DST = L::APP_STACK_BASE + 0xC00;
    const uint32_t STAGE_SRC = L::APP_STACK_BASE + 0xE00;
    std::map<std::string, uint32_t> externs = {
        {"TABLE_BASE", L::TABLE_BASE},
        {"MMIO_IN", L::MMIO_BASE},
        {"MMIO_OUT", L::MMIO_BASE + L::MMIO_LEN / 2},
        {"GATE_ADDR", L::DATA_BASE},
        {"STAGE_DST_LOW", STAGE_DST_LOW},
        {"STAGE_DST", STAGE_DST},
        {"STAGE_SRC", STAGE_SRC},
        {"BITCPY_DST", STAGE_DST},
        {"BITCPY_SRC", STAGE_SRC},
    };

    std::string rt_src;
    for (const auto& fn : imported_fn_names()) rt_src += imported_fn_source(fn);
    AsmFragment rt = assemble(rt_src, L::RT_CODE_BASE, externs);
    if (rt.bytes.size() > L::RT_CODE_LEN - 0x20)
        throw std::runtime_error("runtime library overflows its region");

    // address-table slots (byte offsets): 0 = PLC_PRG, 4 = Stage, 8 = OutputFn,
    // 12.. = imported functions, 0x40 = the slot CWE-78 exploits, rest zero
    const uint32_t SLOT_PLC = 0, SLOT_STAGE = 4, SLOT_OUT = 8;
    std::map<std::string, uint32_t> fn_slot;
    uint32_t next_slot = 12;
    for (const auto& fn : imported_fn_names()) {
        fn_slot[fn] = next_slot;
        next_slot += 4;
    }
    const uint32_t hijack_slot_off = 0x40;
    const uint32_t hijack_cell = L::TABLE_BASE + hijack_slot_off;

    // ---- vulnerable-caller frame layout ----
    // [0] lr  [4] fp  [8] sensor a  [12] sensor b  [16..] local staging + padding
    const uint32_t lo_src = 16;   // frame-local source staging (787/20 copies)
    const uint32_t arr_off = 16;  // array_index variant's local array zone
    uint32_t caller_sz = lo_src + sh.cap + 0x20 + 4 * sh.pad_words;
    caller_sz = std::min<uint32_t>(((caller_sz + 7) / 8) * 8, 0xF0);

    const uint32_t sp0 = L::APP_STACK_BASE;
    const uint32_t plc_frame = sp0 + ENTRY_SZ;
    const uint32_t caller_frame = sh.deep_call ? plc_frame + OUTER_SZ : plc_frame;

    GroundTruth gt;
    gt.name = sh.name;
    gt.sector = sh.sector;
    gt.imported_fn = sh.fn;
    gt.cwe = sh.cwe;
    gt.bound_limit = sh.cap;

    const uint32_t arr_addr = caller_frame + arr_off;

    uint32_t exploit_size = 0, legit_size = sh.cap, exploit_aux = 0, legit_aux = 0;
    switch (sh.cwe) {
        case 787:
            if (is_bit) {
                // offset attack: the blit window slides across the boundary;
                // the operator bound pins the offset at its legitimate value
                exploit_size = sh.cap;
                exploit_aux = (L::RT_STACK_BASE - STAGE_DST) - sh.cap + 8;
                gt.candidate_index = 0;  // offset parameter, first DFS candidate
                gt.expected_candidates = 2;
                gt.bound_limit = 0;
            } else {
                exploit_size = (L::RT_STACK_BASE - STAGE_DST) + 8;
                gt.candidate_index = 0;
                gt.expected_candidates = 1;
            }
            gt.expected_rule = "oob_write";
            gt.patch_id = "bound_check";
            break;
        case 125:
            // size attack: reads leave the source staging window and enter the
            // runtime stack while writes stay inside the app stack
            exploit_size = (L::RT_STACK_BASE - STAGE_SRC) + 8;
            if (is_bit) {
                gt.candidate_index = 1;  // size parameter, second DFS candidate
                gt.expected_candidates = 2;
            } else {
                gt.candidate_index = 0;
                gt.expected_candidates = 1;
            }
            gt.expected_rule = "oob_read";
            gt.patch_id = "bound_check";
            break;
        case 20:
            // oversized but contained: only the write profile notices
            exploit_size = sh.cap + 0x20;
            if (is_bit) {
                gt.candidate_index = 1;
                gt.expected_candidates = 2;
            } else {
                gt.candidate_index = 0;
                gt.expected_candidates = 1;
            }
            gt.expected_rule = "input_deviation";
            gt.patch_id = "bound_check";
            break;
        case 78:
            gt.expected_rule = "cmd_injection";
            gt.patch_id = "table_restore";
            gt.table_cell = hijack_cell;
            legit_size = 4;
            exploit_size = 4;
            legit_aux = 4;
            exploit_aux = hijack_cell - arr_addr;
            gt.candidate_index = 0;
            gt.expected_candidates = is_arr ? 2 : 1;
            break;
        default:
            throw std::runtime_error("unsupported cwe");
    }

    const uint32_t sensor_a = 0x40, sensor_b = 0x20;
    const uint32_t payload_value = L::DATA_BASE + 0x100;  // adversary's landing zone
    gt.legit_input = input_words(sensor_a, sensor_b, legit_size, legit_aux);
    gt.exploit_input = input_words(sensor_a, sensor_b, exploit_size, exploit_aux);

    // ---- application source ----
    std::ostringstream app;
    app << "header:\n.word 0x41434C50\n.word 1\n.word 16\n.word 0\n";
    app << "entry:\n"
        << "    str  lr, [sp, #0]\n"
        << "    str  fp, [sp, #4]\n"
        << "    ldr  r0, =GATE_ADDR\n"
        << "    ldr  r0, [r0]\n"
        << "    cmp  r0, #0\n"
        << "    bne  entry.skip\n"
        << "    ldr  fp, =TABLE_BASE\n"
        << "    ldr  r6, [fp, #" << SLOT_PLC << "]\n"
        << "    add  sp, sp, #" << ENTRY_SZ << "\n"
        << "    mov  lr, pc\n"
        << "    mov  pc, r6\n"
        << "    sub  sp, sp, #" << ENTRY_SZ << "\n"
        << "entry.skip:\n"
        << "    ldr  fp, [sp, #4]\n"
        << "    ldr  lr, [sp, #0]\n"
        << "    mov  pc, lr\n"
        << ".pool\n";

    auto emit_call = [&](std::ostringstream& os, const std::string& tag, uint32_t slot_off,
                         uint32_t frame_sz) {
        os << "    ldr  fp, =TABLE_BASE\n";
        os << tag << ":\n";
        os << "    ldr  r6, [fp, #" << slot_off << "]\n";
        os << "    add  sp, sp, #" << frame_sz << "\n";
        os << "    mov  lr, pc\n";
        os << "    mov  pc, r6\n";
        os << "    sub  sp, sp, #" << frame_sz << "\n";
    };

    std::ostringstream outer;
    if (sh.deep_call) {
        outer << "PLC_PRG:\n    str  lr, [sp, #0]\n    str  fp, [sp, #4]\n";
        emit_call(outer, "call.stage", SLOT_STAGE, OUTER_SZ);
        outer << "    ldr  fp, [sp, #4]\n    ldr  lr, [sp, #0]\n    mov  pc, lr\n.pool\n";
    }

    std::ostringstream body;
    const std::string caller_label = sh.deep_call ? "Stage" : "PLC_PRG";
    body << caller_label << ":\n";
    body << "    str  lr, [sp, #0]\n    str  fp, [sp, #4]\n";
    body << "    ldr  r4, =MMIO_IN\n";
    body << "    ldr  r0, [r4, #0]\n    str  r0, [sp, #8]\n";
    body << "    ldr  r0, [r4, #4]\n    str  r0, [sp, #12]\n";

    uint32_t vuln_param_cell = 0;

    if (is_copy || is_set) {
        if (is_copy && !copy_into_table && sh.cwe != 125) {
            // stage the source buffer head with the sampled sensors
            body << "    ldr  r1, [sp, #8]\n    str  r1, [sp, #" << lo_src << "]\n";
            body << "    ldr  r1, [sp, #12]\n    str  r1, [sp, #" << (lo_src + 4) << "]\n";
        }
        if (copy_into_table) {
            body << "    ldr  r1, =" << payload_value << "\n";
            body << "    str  r1, [sp, #" << lo_src << "]\n";
        }
        // destination parameter: a fixed staging window (or, for the
        // injection variant, an address computed from the attacker's index)
        if (copy_into_table) {
            body << "    add  r0, sp, #" << arr_off << "\n";
            body << "    ldr  r1, [r4, #12]\n";
            body << "    add  r0, r0, r1\n";
            body << "    str  r0, [sp, #" << (caller_sz + 8) << "]\n";
        } else if (sh.cwe == 125) {
            body << "    ldr  r0, =STAGE_DST_LOW\n";
            body << "    str  r0, [sp, #" << (caller_sz + 8) << "]\n";
        } else {
            body << "    ldr  r0, =STAGE_DST\n";
            body << "    str  r0, [sp, #" << (caller_sz + 8) << "]\n";
        }
        // source / fill-value parameter
        if (is_copy && sh.cwe == 125) {
            body << "    ldr  r0, =STAGE_SRC\n";
            body << "    str  r0, [sp, #" << (caller_sz + 12) << "]\n";
        } else if (is_copy) {
            body << "    add  r0, sp, #" << lo_src << "\n";
            body << "    str  r0, [sp, #" << (caller_sz + 12) << "]\n";
        } else {
            body << "    ldr  r0, [sp, #8]\n";
            body << "    str  r0, [sp, #" << (caller_sz + 12) << "]\n";
        }
        // the size field flows straight from the input block into its cell
        body << "    ldr  r0, [r4, #8]\n";
        body << "    str  r0, [sp, #" << (caller_sz + 16) << "]\n";
        vuln_param_cell = caller_frame + caller_sz + 16;
        emit_call(body, "call.vuln", fn_slot[sh.fn], caller_sz);
    } else if (is_bit) {
        body << "    ldr  r0, [r4, #8]\n";
        body << "    str  r0, [sp, #" << (caller_sz + 8) << "]\n";
        body << "    ldr  r0, [r4, #12]\n";
        body << "    str  r0, [sp, #" << (caller_sz + 12) << "]\n";
        vuln_param_cell = caller_frame + caller_sz + (gt.candidate_index == 0 ? 12 : 8);
        emit_call(body, "call.vuln", fn_slot["BitCpy"], caller_sz);
    } else if (is_arr) {
        // memory-backed index and payload, then the unchecked indexed store
        body << "    ldr  r0, [r4, #12]\n    str  r0, [sp, #" << (arr_off + 16) << "]\n";
        body << "    ldr  r0, =" << payload_value << "\n";
        body << "    str  r0, [sp, #" << (arr_off + 20) << "]\n";
        body << "    ldr  r1, [sp, #" << (arr_off + 16) << "]\n";
        body << "    add  r0, sp, #" << arr_off << "\n";
        body << "    add  r0, r0, r1\n";
        body << "    ldr  r5, [sp, #" << (arr_off + 20) << "]\n";
        body << "vuln.store:\n";
        body << "    str  r5, [r0]\n";
        vuln_param_cell = caller_frame + arr_off + 20;
    }

    if (sh.cwe == 78) emit_call(body, "call.hijacked", hijack_slot_off, caller_sz);

    // control computation and output refresh
    body << "    ldr  r0, [sp, #8]\n    ldr  r1, [sp, #12]\n";
    body << "    add  r0, r0, r1\n    sub  r0, r0, #32\n";
    body << "    ldr  r4, =MMIO_OUT\n    str  r0, [r4, #0]\n";
    if ((is_copy || is_set) && !copy_into_table) {
        // the transferred data participates in the outputs
        body << "    ldr  r3, =" << (sh.cwe == 125 ? "STAGE_DST_LOW" : "STAGE_DST") << "\n";
        body << "    ldr  r1, [r3, #0]\n";
        body << "    ldr  r2, [r3, #4]\n";
        body << "    add  r1, r1, r2\n    str  r1, [r4, #4]\n";
    } else {
        body << "    ldr  r1, [sp, #8]\n    ldr  r2, [sp, #12]\n";
        body << "    sub  r1, r1, r2\n    str  r1, [r4, #4]\n";
    }
    body << "    ldr  fp, [sp, #4]\n    ldr  lr, [sp, #0]\n    mov  pc, lr\n.pool\n";

    std::ostringstream helper;
    helper << "OutputFn:\n    str  lr, [sp, #0]\n";
    helper << "    ldr  r4, =MMIO_OUT\n    mov  r0, #1\n    str  r0, [r4, #8]\n";
    helper << "    ldr  lr, [sp, #0]\n    mov  pc, lr\n.pool\n";

    std::string app_src = app.str() + outer.str() + body.str() + helper.str();
    AsmFragment af = assemble(app_src, L::APP_CODE_BASE, externs);
    if (af.bytes.size() > L::APP_CODE_LEN / 2)
        throw std::runtime_error("application overflows the code budget: " + sh.name);

    // ---- compose the image ----
    MemoryImage img;
    img.add_region({RegionKind::Mmio, L::MMIO_BASE, L::MMIO_LEN, {}});
    img.add_region({RegionKind::AppStack, L::APP_STACK_BASE, L::APP_STACK_LEN, {}});
    img.add_region({RegionKind::RuntimeStack, L::RT_STACK_BASE, L::RT_STACK_LEN, {}});
    img.add_region({RegionKind::RuntimeCode, L::RT_CODE_BASE, L::RT_CODE_LEN, {}});
    img.add_region({RegionKind::AppCode, L::APP_CODE_BASE, L::APP_CODE_LEN, {}});
    img.add_region({RegionKind::AddressTable, L::TABLE_BASE, L::TABLE_LEN, {}});
    img.add_region({RegionKind::Data, L::DATA_BASE, L::DATA_LEN, {}});
    img.app_entry = af.label("entry");
    img.app_load_offset = L::LOAD_OFFSET;
    img.initial_sp = sp0;
    img.initial_lr = L::END_STUB;
    img.gate_addr = L::DATA_BASE;  // gate word, zero = run
    img.cycles_done = 1;           // the table was initialized before extraction

    for (size_t i = 0; i < rt.bytes.size(); ++i)
        img.write8(L::RT_CODE_BASE + uint32_t(i), rt.bytes[i]);
    for (size_t i = 0; i < af.bytes.size(); ++i)
        img.write8(L::APP_CODE_BASE + uint32_t(i), af.bytes[i]);

    img.write32(L::TABLE_BASE + SLOT_PLC, af.label("PLC_PRG"));
    if (sh.deep_call) img.write32(L::TABLE_BASE + SLOT_STAGE, af.label("Stage"));
    img.write32(L::TABLE_BASE + SLOT_OUT, af.label("OutputFn"));
    for (const auto& [fn, slot] : fn_slot) img.write32(L::TABLE_BASE + slot, rt.label(fn));
    img.write32(L::TABLE_BASE + hijack_slot_off, af.label("OutputFn"));

    img.mmio_input = gt.exploit_input;
    img.legit_input = gt.legit_input;
    img.finalize();

    gt.input_cell = vuln_param_cell;
    gt.block_fn_entry = af.label(caller_label);
    if (is_arr) {
        gt.bound_pc = af.label("vuln.store");
        gt.comparison_found = false;
        gt.hook_ldr_pc = af.label("call.hijacked");
    } else {
        std::string loop_label =
            sh.fn + (is_set ? ".fill"
                            : (is_bit ? ".blit" : (sh.fn == "SysMemMove" ? ".fwd" : ".copy")));
        gt.bound_pc = rt.label(loop_label);  // the subs heads the loop block
        gt.comparison_found = true;
        gt.hook_ldr_pc = sh.cwe == 78 ? af.label("call.hijacked") : af.label("call.vuln");
    }

    BuildOut out;
    out.image = std::move(img);
    out.gt = std::move(gt);
    return out;
}

}  // namespace

std::vector<CorpusBinary> generate_corpus(uint64_t seed) {
    std::mt19937_64 rng(seed);
    struct Pick {
        const char* fn;
        int cwe;
        const char* sector;
    };
    const Pick picks[] = {
        {"SysMemSet", 787, "aircraft_flight_control"},
        {"SysMemSet", 20, "desalination_plant"},
        {"SysMemMove", 787, "anaerobic_digestion_reactor"},
        {"SysMemMove", 125, "chemical_plant"},
        {"SysMemMove", 20, "smart_grid"},
        {"SysMemCpy", 78, "chemical_plant"},
        {"SysMemCpy", 125, "desalination_plant"},
        {"MemSet", 20, "aircraft_flight_control"},
        {"MemSet", 787, "anaerobic_digestion_reactor"},
        {"MemCpy", 125, "aircraft_flight_control"},
        {"MemCpy", 787, "anaerobic_digestion_reactor"},
        {"MemCpy", 787, "chemical_plant"},
        {"MemCpy", 787, "desalination_plant"},
        {"MemCpy", 125, "smart_grid"},
        {"BitCpy", 787, "aircraft_flight_control"},
        {"BitCpy", 125, "anaerobic_digestion_reactor"},
        {"BitCpy", 20, "anaerobic_digestion_reactor"},
        {"BitCpy", 125, "smart_grid"},
        {"array_index", 78, "aircraft_flight_control"},
        {"array_index", 78, "anaerobic_digestion_reactor"},
        {"array_index", 78, "chemical_plant"},
        {"array_index", 78, "desalination_plant"},
        {"array_index", 78, "smart_grid"},
        {"SysMemSet", 787, "desalination_plant"},
    };

    std::vector<CorpusBinary> out;
    int idx = 0;
    for (const Pick& p : picks) {
        Shape sh;
        std::ostringstream name;
        name << "bin" << (idx < 10 ? "0" : "") << idx << "_" << p.sector << "_" << p.fn << "_cwe"
             << p.cwe;
        sh.name = name.str();
        sh.sector = p.sector;
        sh.fn = p.fn;
        sh.cwe = p.cwe;
        sh.deep_call = (idx == 23) || (idx % 7 == 3);
        sh.cap = 16 + 8 * uint32_t(rng() % 3);
        sh.pad_words = uint32_t(rng() % 4);
        if (sh.fn == "array_index") sh.deep_call = false;
        BuildOut b = build_binary(sh);
        out.push_back({std::move(b.gt), std::move(b.image)});
        ++idx;
    }
    return out;
}

void write_corpus(const std::vector<CorpusBinary>& corpus, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    for (const auto& bin : corpus) {
        fs::path dir = out_dir / bin.gt.name;
        dump_snapshot(bin.image, dir);
        std::ofstream t(dir / "ground.truth");
        const GroundTruth& g = bin.gt;
        t << "name=" << g.name << "\n";
        t << "sector=" << g.sector << "\n";
        t << "imported_fn=" << g.imported_fn << "\n";
        t << "cwe=" << g.cwe << "\n";
        t << "expected_rule=" << g.expected_rule << "\n";
        t << "patch=" << g.patch_id << "\n";
        t << "input_cell=" << hexs(g.input_cell) << "\n";
        t << "bound_pc=" << hexs(g.bound_pc) << "\n";
        t << "comparison_found=" << (g.comparison_found ? 1 : 0) << "\n";
        t << "block_fn=" << hexs(g.block_fn_entry) << "\n";
        t << "bound_limit=" << hexs(g.bound_limit) << "\n";
        t << "candidate_index=" << g.candidate_index << "\n";
        t << "expected_candidates=" << g.expected_candidates << "\n";
        t << "hook_ldr_pc=" << hexs(g.hook_ldr_pc) << "\n";
        if (g.table_cell) t << "table_cell=" << hexs(g.table_cell) << "\n";
        t << "exploit_input=" << to_hex(g.exploit_input) << "\n";
        t << "legit_input=" << to_hex(g.legit_input) << "\n";
    }
}

GroundTruth load_ground_truth(const std::filesystem::path& truth_file) {
    std::ifstream f(truth_file);
    if (!f) throw std::runtime_error("cannot open ground truth: " + truth_file.string());
    GroundTruth g;
    std::string line;
    while (std::getline(f, line)) {
        size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "name") g.name = val;
        else if (key == "sector") g.sector = val;
        else if (key == "imported_fn") g.imported_fn = val;
        else if (key == "cwe") g.cwe = std::stoi(val);
        else if (key == "expected_rule") g.expected_rule = val;
        else if (key == "patch") g.patch_id = val;
        else if (key == "input_cell") g.input_cell = uint32_t(std::stoul(val, nullptr, 0));
        else if (key == "bound_pc") g.bound_pc = uint32_t(std::stoul(val, nullptr, 0));
        else if (key == "comparison_found") g.comparison_found = (val == "1");
        else if (key == "block_fn") g.block_fn_entry = uint32_t(std::stoul(val, nullptr, 0));
        else if (key == "bound_limit") g.bound_limit = uint32_t(std::stoul(val, nullptr, 0));
        else if (key == "candidate_index") g.candidate_index = std::stoul(val);
        else if (key == "expected_candidates") g.expected_candidates = std::stoul(val);
        else if (key == "hook_ldr_pc") g.hook_ldr_pc = uint32_t(std::stoul(val, nullptr, 0));
        else if (key == "table_cell") g.table_cell = uint32_t(std::stoul(val, nullptr, 0));
        else if (key == "exploit_input") g.exploit_input = from_hex(val);
        else if (key == "legit_input") g.legit_input = from_hex(val);
    }
    return g;
}

}  // namespace plcpatch
