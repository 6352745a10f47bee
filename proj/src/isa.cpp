#include "plcpatch/isa.hpp"

#include <bit>
#include <sstream>

namespace plcpatch {

namespace {

constexpr uint32_t OPC_SUB = 0x2, OPC_ADD = 0x4, OPC_CMP = 0xA, OPC_MOV = 0xD;

bool valid_cond(uint32_t bits) {
    switch (bits) {
        case 0x0: case 0x1: case 0x2: case 0x3: case 0xA: case 0xB: case 0xE: return true;
        default: return false;
    }
}

void check_reg(uint8_t r, const char* what) {
    if (r > 15) throw EncodeError(std::string(what) + ": register index out of range");
}

void check_gp(uint8_t r, const char* what) {
    check_reg(r, what);
    if (r == REG_PC) throw EncodeError(std::string(what) + ": pc not allowed here");
}

void check_imm8(uint32_t imm, const char* what) {
    if (imm > 0xFF) throw EncodeError(std::string(what) + ": immediate exceeds 8 bits");
}

void check_imm12(uint32_t imm, const char* what) {
    if (imm > 0xFFF) throw OffsetOutOfRange(std::string(what) + ": offset exceeds 0xFFF");
}

Instruction dp(Op op, Cond c, uint8_t rd, uint8_t rn, uint8_t rm, bool is_imm, uint32_t imm) {
    Instruction i;
    i.op = op;
    i.cond = c;
    i.rd = rd;
    i.rn = rn;
    i.rm = rm;
    i.op2_is_imm = is_imm;
    i.imm = imm;
    return i;
}

}  // namespace

// ---------------------------------------------------------------------------
// Factories
// ---------------------------------------------------------------------------

Instruction mov_imm(uint8_t rd, uint32_t imm, Cond c) {
    check_gp(rd, "mov");
    check_imm8(imm, "mov");
    return dp(Op::MovImm, c, rd, 0, 0, true, imm);
}

Instruction mov_reg(uint8_t rd, uint8_t rm, Cond c) {
    check_gp(rd, "mov");
    check_reg(rm, "mov");
    return dp(Op::MovReg, c, rd, 0, rm, false, 0);
}

Instruction mov_pc_reg(uint8_t rm, Cond c) {
    check_gp(rm, "mov pc");
    return dp(Op::MovPcReg, c, REG_PC, 0, rm, false, 0);
}

Instruction add_imm(uint8_t rd, uint8_t rn, uint32_t imm, Cond c) {
    check_gp(rd, "add");
    check_gp(rn, "add");
    check_imm8(imm, "add");
    return dp(Op::Add, c, rd, rn, 0, true, imm);
}

Instruction add_reg(uint8_t rd, uint8_t rn, uint8_t rm, Cond c) {
    check_gp(rd, "add");
    check_gp(rn, "add");
    check_gp(rm, "add");
    return dp(Op::Add, c, rd, rn, rm, false, 0);
}

Instruction sub_imm(uint8_t rd, uint8_t rn, uint32_t imm, Cond c) {
    check_gp(rd, "sub");
    check_gp(rn, "sub");
    check_imm8(imm, "sub");
    return dp(Op::Sub, c, rd, rn, 0, true, imm);
}

Instruction sub_reg(uint8_t rd, uint8_t rn, uint8_t rm, Cond c) {
    check_gp(rd, "sub");
    check_gp(rn, "sub");
    check_gp(rm, "sub");
    return dp(Op::Sub, c, rd, rn, rm, false, 0);
}

Instruction subs_imm(uint8_t rd, uint8_t rn, uint32_t imm, Cond c) {
    check_gp(rd, "subs");
    check_gp(rn, "subs");
    check_imm8(imm, "subs");
    return dp(Op::Subs, c, rd, rn, 0, true, imm);
}

Instruction subs_reg(uint8_t rd, uint8_t rn, uint8_t rm, Cond c) {
    check_gp(rd, "subs");
    check_gp(rn, "subs");
    check_gp(rm, "subs");
    return dp(Op::Subs, c, rd, rn, rm, false, 0);
}

Instruction cmp_imm(uint8_t rn, uint32_t imm, Cond c) {
    check_gp(rn, "cmp");
    check_imm8(imm, "cmp");
    return dp(Op::Cmp, c, 0, rn, 0, true, imm);
}

Instruction cmp_reg(uint8_t rn, uint8_t rm, Cond c) {
    check_gp(rn, "cmp");
    check_gp(rm, "cmp");
    return dp(Op::Cmp, c, 0, rn, rm, false, 0);
}

Instruction ldr_imm(uint8_t rd, uint8_t rn, uint32_t imm12, Cond c) {
    check_gp(rd, "ldr");
    check_imm12(imm12, "ldr");
    if (rn == REG_PC) {  // pc-relative loads are the literal form
        Instruction i = ldr_lit(rd, imm12, c);
        return i;
    }
    check_reg(rn, "ldr");
    Instruction i;
    i.op = Op::LdrImm;
    i.cond = c;
    i.rd = rd;
    i.rn = rn;
    i.imm = imm12;
    return i;
}

Instruction ldr_lit(uint8_t rd, uint32_t imm12, Cond c) {
    check_gp(rd, "ldr literal");
    check_imm12(imm12, "ldr literal");
    Instruction i;
    i.op = Op::LdrLit;
    i.cond = c;
    i.rd = rd;
    i.rn = REG_PC;
    i.imm = imm12;
    return i;
}

Instruction str_imm(uint8_t rd, uint8_t rn, uint32_t imm12, Cond c) {
    check_gp(rd, "str");
    check_gp(rn, "str");
    check_imm12(imm12, "str");
    Instruction i;
    i.op = Op::StrImm;
    i.cond = c;
    i.rd = rd;
    i.rn = rn;
    i.imm = imm12;
    return i;
}

static Instruction block_xfer(Op op, uint8_t rn, uint16_t list, bool wb, Cond c) {
    check_gp(rn, "ldm/stm");
    if (list == 0) throw EncodeError("ldm/stm: empty register list");
    if (list & (1u << REG_PC)) throw EncodeError("ldm/stm: pc not allowed in list");
    if (wb && (list & (1u << rn))) throw EncodeError("ldm/stm: writeback base inside list");
    Instruction i;
    i.op = op;
    i.cond = c;
    i.rn = rn;
    i.reglist = list;
    i.writeback = wb;
    return i;
}

Instruction ldm(uint8_t rn, uint16_t list, bool writeback, Cond c) {
    return block_xfer(Op::Ldm, rn, list, writeback, c);
}

Instruction stm(uint8_t rn, uint16_t list, bool writeback, Cond c) {
    return block_xfer(Op::Stm, rn, list, writeback, c);
}

Instruction branch(int32_t word_off, Cond c) {
    if (word_off < -(1 << 23) || word_off > (1 << 23) - 1)
        throw OffsetOutOfRange("b: branch offset exceeds 24 bits");
    Instruction i;
    i.op = Op::B;
    i.cond = c;
    i.branch_off = word_off;
    return i;
}

Instruction nop() {
    Instruction i;
    i.op = Op::Nop;
    i.cond = Cond::Al;
    return i;
}

// ---------------------------------------------------------------------------
// Encoding (see docs/encoding.md for the bit layout)
// ---------------------------------------------------------------------------

uint32_t encode(const Instruction& i) {
    uint32_t cond = uint32_t(i.cond) << 28;
    switch (i.op) {
        case Op::MovImm: {
            check_gp(i.rd, "mov");
            check_imm8(i.imm, "mov");
            return cond | (1u << 25) | (OPC_MOV << 21) | (uint32_t(i.rd) << 12) | i.imm;
        }
        case Op::MovReg: {
            check_gp(i.rd, "mov");
            check_reg(i.rm, "mov");
            return cond | (OPC_MOV << 21) | (uint32_t(i.rd) << 12) | i.rm;
        }
        case Op::MovPcReg: {
            check_gp(i.rm, "mov pc");
            return cond | (OPC_MOV << 21) | (uint32_t(REG_PC) << 12) | i.rm;
        }
        case Op::Add:
        case Op::Sub:
        case Op::Subs: {
            check_gp(i.rd, "dp");
            check_gp(i.rn, "dp");
            uint32_t opc = (i.op == Op::Add) ? OPC_ADD : OPC_SUB;
            uint32_t s = (i.op == Op::Subs) ? (1u << 20) : 0;
            uint32_t base = cond | (opc << 21) | s | (uint32_t(i.rn) << 16) | (uint32_t(i.rd) << 12);
            if (i.op2_is_imm) {
                check_imm8(i.imm, "dp");
                return base | (1u << 25) | i.imm;
            }
            check_gp(i.rm, "dp");
            return base | i.rm;
        }
        case Op::Cmp: {
            check_gp(i.rn, "cmp");
            uint32_t base = cond | (OPC_CMP << 21) | (1u << 20) | (uint32_t(i.rn) << 16);
            if (i.op2_is_imm) {
                check_imm8(i.imm, "cmp");
                return base | (1u << 25) | i.imm;
            }
            check_gp(i.rm, "cmp");
            return base | i.rm;
        }
        case Op::LdrImm:
        case Op::StrImm:
        case Op::LdrLit: {
            check_gp(i.rd, "ldr/str");
            check_imm12(i.imm, "ldr/str");
            uint32_t l = (i.op == Op::StrImm) ? 0 : (1u << 20);
            uint32_t rn = (i.op == Op::LdrLit) ? REG_PC : i.rn;
            if (i.op != Op::LdrLit) check_gp(i.rn, "ldr/str");
            return cond | (1u << 26) | (1u << 24) | (1u << 23) | l | (rn << 16) |
                   (uint32_t(i.rd) << 12) | i.imm;
        }
        case Op::Ldm:
        case Op::Stm: {
            check_gp(i.rn, "ldm/stm");
            if (i.reglist == 0) throw EncodeError("ldm/stm: empty register list");
            if (i.reglist & (1u << REG_PC)) throw EncodeError("ldm/stm: pc in list");
            if (i.writeback && (i.reglist & (1u << i.rn)))
                throw EncodeError("ldm/stm: writeback base inside list");
            uint32_t l = (i.op == Op::Ldm) ? (1u << 20) : 0;
            uint32_t w = i.writeback ? (1u << 21) : 0;
            return cond | (1u << 27) | (1u << 23) | w | l | (uint32_t(i.rn) << 16) | i.reglist;
        }
        case Op::B: {
            if (i.branch_off < -(1 << 23) || i.branch_off > (1 << 23) - 1)
                throw OffsetOutOfRange("b: branch offset exceeds 24 bits");
            return cond | (5u << 25) | (uint32_t(i.branch_off) & 0x00FFFFFF);
        }
        case Op::Nop:
            if (i.cond != Cond::Al) throw EncodeError("nop: only the AL form is defined");
            return 0xE320F000;
    }
    throw EncodeError("unknown instruction kind");
}

std::optional<Instruction> decode(uint32_t w) {
    uint32_t cond_bits = w >> 28;
    if (!valid_cond(cond_bits)) return std::nullopt;
    Cond cond = Cond(cond_bits);

    if ((w & 0x0FFFFFFF) == 0x0320F000)
        return cond == Cond::Al ? std::optional<Instruction>(nop()) : std::nullopt;

    uint32_t cls = (w >> 25) & 0x7;

    // Data processing: 000 (register op2) / 001 (immediate op2)
    if (cls == 0 || cls == 1) {
        bool is_imm = cls == 1;
        uint32_t opc = (w >> 21) & 0xF;
        bool s = (w >> 20) & 1;
        uint8_t rn = (w >> 16) & 0xF;
        uint8_t rd = (w >> 12) & 0xF;
        uint32_t op2 = w & 0xFFF;
        if (is_imm) {
            if (op2 & 0xF00) return std::nullopt;  // rotation not in the subset
        } else {
            if (op2 & 0xFF0) return std::nullopt;  // shifted registers not in the subset
        }
        uint8_t rm = is_imm ? 0 : uint8_t(op2 & 0xF);
        uint32_t imm = op2 & 0xFF;

        if (opc == OPC_MOV) {
            if (s || rn != 0) return std::nullopt;
            if (is_imm) {
                if (rd == REG_PC) return std::nullopt;
                return dp(Op::MovImm, cond, rd, 0, 0, true, imm);
            }
            if (rd == REG_PC) {
                if (rm == REG_PC) return std::nullopt;
                return dp(Op::MovPcReg, cond, REG_PC, 0, rm, false, 0);
            }
            return dp(Op::MovReg, cond, rd, 0, rm, false, 0);
        }
        if (opc == OPC_ADD || opc == OPC_SUB) {
            if (rd == REG_PC || rn == REG_PC) return std::nullopt;
            if (!is_imm && rm == REG_PC) return std::nullopt;
            if (opc == OPC_ADD && s) return std::nullopt;
            Op op = (opc == OPC_ADD) ? Op::Add : (s ? Op::Subs : Op::Sub);
            return dp(op, cond, rd, rn, rm, is_imm, is_imm ? imm : 0);
        }
        if (opc == OPC_CMP) {
            if (!s || rd != 0) return std::nullopt;
            if (rn == REG_PC) return std::nullopt;
            if (!is_imm && rm == REG_PC) return std::nullopt;
            return dp(Op::Cmp, cond, 0, rn, rm, is_imm, is_imm ? imm : 0);
        }
        return std::nullopt;
    }

    // Single data transfer: 010 with P=1, U=1, B=0, W=0
    if (cls == 2) {
        bool p = (w >> 24) & 1, u = (w >> 23) & 1, b = (w >> 22) & 1, wb = (w >> 21) & 1;
        bool l = (w >> 20) & 1;
        if (!p || !u || b || wb) return std::nullopt;
        uint8_t rn = (w >> 16) & 0xF;
        uint8_t rd = (w >> 12) & 0xF;
        uint32_t imm = w & 0xFFF;
        if (rd == REG_PC) return std::nullopt;
        if (l) {
            if (rn == REG_PC) return ldr_lit(rd, imm, cond);
            return ldr_imm(rd, rn, imm, cond);
        }
        if (rn == REG_PC) return std::nullopt;
        return str_imm(rd, rn, imm, cond);
    }

    // Block transfer: 100 with P=0, U=1, S=0 (increment-after)
    if (cls == 4) {
        bool p = (w >> 24) & 1, u = (w >> 23) & 1, s = (w >> 22) & 1, wb = (w >> 21) & 1;
        bool l = (w >> 20) & 1;
        if (p || !u || s) return std::nullopt;
        uint8_t rn = (w >> 16) & 0xF;
        uint16_t list = w & 0xFFFF;
        if (rn == REG_PC || list == 0 || (list & (1u << REG_PC))) return std::nullopt;
        if (wb && (list & (1u << rn))) return std::nullopt;
        Instruction i;
        i.op = l ? Op::Ldm : Op::Stm;
        i.cond = cond;
        i.rn = rn;
        i.reglist = list;
        i.writeback = wb;
        return i;
    }

    // Branch: 101 with L=0
    if (cls == 5) {
        if ((w >> 24) & 1) return std::nullopt;  // bl not in the subset
        int32_t off = int32_t(w << 8) >> 8;      // sign-extend imm24
        Instruction i;
        i.op = Op::B;
        i.cond = cond;
        i.branch_off = off;
        return i;
    }

    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Disassembly (canonical forms only; assembler round-trips these)
// ---------------------------------------------------------------------------

namespace {

const char* cond_suffix(Cond c) {
    switch (c) {
        case Cond::Eq: return "eq";
        case Cond::Ne: return "ne";
        case Cond::Hs: return "hs";
        case Cond::Lo: return "lo";
        case Cond::Ge: return "ge";
        case Cond::Lt: return "lt";
        case Cond::Al: return "";
    }
    return "";
}

std::string reg_name(uint8_t r) {
    switch (r) {
        case REG_FP: return "fp";
        case REG_SP: return "sp";
        case REG_LR: return "lr";
        case REG_PC: return "pc";
        default: return "r" + std::to_string(r);
    }
}

std::string hex_imm(uint32_t v) {
    std::ostringstream os;
    os << "#0x" << std::hex << v;
    return os.str();
}

std::string list_str(uint16_t list) {
    std::string out = "{";
    bool first = true;
    for (int i = 0; i < 16; ++i) {
        if (list & (1u << i)) {
            if (!first) out += ", ";
            out += reg_name(uint8_t(i));
            first = false;
        }
    }
    return out + "}";
}

}  // namespace

std::string disassemble(const Instruction& i) {
    std::string c = cond_suffix(i.cond);
    std::ostringstream os;
    switch (i.op) {
        case Op::MovImm:
            os << "mov" << c << " " << reg_name(i.rd) << ", " << hex_imm(i.imm);
            break;
        case Op::MovReg:
            os << "mov" << c << " " << reg_name(i.rd) << ", " << reg_name(i.rm);
            break;
        case Op::MovPcReg:
            os << "mov" << c << " pc, " << reg_name(i.rm);
            break;
        case Op::Add:
        case Op::Sub:
        case Op::Subs: {
            const char* m = i.op == Op::Add ? "add" : (i.op == Op::Subs ? "subs" : "sub");
            os << m << c << " " << reg_name(i.rd) << ", " << reg_name(i.rn) << ", ";
            if (i.op2_is_imm) os << hex_imm(i.imm);
            else os << reg_name(i.rm);
            break;
        }
        case Op::Cmp:
            os << "cmp" << c << " " << reg_name(i.rn) << ", ";
            if (i.op2_is_imm) os << hex_imm(i.imm);
            else os << reg_name(i.rm);
            break;
        case Op::LdrImm:
            os << "ldr" << c << " " << reg_name(i.rd) << ", [" << reg_name(i.rn);
            if (i.imm) os << ", " << hex_imm(i.imm);
            os << "]";
            break;
        case Op::LdrLit:
            os << "ldr" << c << " " << reg_name(i.rd) << ", [pc, " << hex_imm(i.imm) << "]";
            break;
        case Op::StrImm:
            os << "str" << c << " " << reg_name(i.rd) << ", [" << reg_name(i.rn);
            if (i.imm) os << ", " << hex_imm(i.imm);
            os << "]";
            break;
        case Op::Ldm:
        case Op::Stm:
            os << (i.op == Op::Ldm ? "ldm" : "stm") << c << " " << reg_name(i.rn)
               << (i.writeback ? "!" : "") << ", " << list_str(i.reglist);
            break;
        case Op::B:
            os << "b" << c << " " << (i.branch_off >= 0 ? "+" : "") << i.branch_off;
            break;
        case Op::Nop:
            os << "nop";
            break;
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Interpreter
// ---------------------------------------------------------------------------

bool cond_passes(Cond c, const Flags& f) {
    switch (c) {
        case Cond::Eq: return f.z;
        case Cond::Ne: return !f.z;
        case Cond::Hs: return f.c;
        case Cond::Lo: return !f.c;
        case Cond::Ge: return f.n == f.v;
        case Cond::Lt: return f.n != f.v;
        case Cond::Al: return true;
    }
    return false;
}

namespace {

// Reading the pc as an operand yields the fetch address + 8.
uint32_t read_reg(const RegisterFile& rf, uint8_t r, uint32_t pc) {
    return r == REG_PC ? pc + 8 : rf.r[r];
}

void set_flags_sub(Flags& f, uint32_t a, uint32_t b) {
    uint32_t res = a - b;
    f.n = (res >> 31) & 1;
    f.z = res == 0;
    f.c = a >= b;  // no borrow
    f.v = (((a ^ b) & (a ^ res)) >> 31) & 1;
}

TraceEvent ev_reg(uint32_t pc, uint8_t reg, uint32_t value,
                  std::initializer_list<uint8_t> srcs) {
    TraceEvent e;
    e.pc = pc;
    e.kind = EventKind::RegWrite;
    e.reg = reg;
    e.value = value;
    for (uint8_t s : srcs) {
        if (e.n_srcs < e.src_regs.size()) e.src_regs[e.n_srcs++] = s;
    }
    return e;
}

TraceEvent ev_mem(uint32_t pc, bool write, uint32_t addr, uint32_t value,
                  std::initializer_list<uint8_t> srcs) {
    TraceEvent e;
    e.pc = pc;
    e.kind = write ? EventKind::MemWrite : EventKind::MemRead;
    e.addr = addr;
    e.value = value;
    for (uint8_t s : srcs) {
        if (e.n_srcs < e.src_regs.size()) e.src_regs[e.n_srcs++] = s;
    }
    return e;
}

TraceEvent ev_branch(uint32_t pc, uint32_t target) {
    TraceEvent e;
    e.pc = pc;
    e.kind = EventKind::Branch;
    e.target = target;
    return e;
}

}  // namespace

StepResult step(CpuState& state, MemoryImage& mem) {
    StepResult res;
    uint32_t pc = state.regs.pc();

    if (!mem.mapped_range(pc, 4)) {
        res.fault = Fault::UnmappedFetch;
        state.halted = true;
        return res;
    }
    auto instr_opt = decode(mem.read32(pc));
    if (!instr_opt) {
        res.fault = Fault::UndefinedInstruction;
        state.halted = true;
        return res;
    }
    const Instruction& in = *instr_opt;
    RegisterFile& rf = state.regs;
    uint32_t next_pc = pc + 4;
    state.step_count += 1;

    if (!cond_passes(in.cond, rf.flags)) {
        rf.pc() = next_pc;
        return res;
    }

    auto data_read = [&](uint32_t addr, uint32_t& out) -> bool {
        if (!mem.mapped_range(addr, 4)) {
            res.fault = Fault::UnmappedAccess;
            res.access = {pc, addr, false};
            out = 0;
            return false;
        }
        out = mem.read32(addr);
        return true;
    };
    auto data_write = [&](uint32_t addr, uint32_t v) -> bool {
        if (!mem.mapped_range(addr, 4)) {
            res.fault = Fault::UnmappedAccess;
            res.access = {pc, addr, true};
            return false;
        }
        mem.write32(addr, v);
        return true;
    };

    switch (in.op) {
        case Op::MovImm:
            rf.r[in.rd] = in.imm;
            res.events.push_back(ev_reg(pc, in.rd, in.imm, {}));
            break;
        case Op::MovReg: {
            uint32_t v = read_reg(rf, in.rm, pc);
            rf.r[in.rd] = v;
            res.events.push_back(ev_reg(pc, in.rd, v, {in.rm}));
            break;
        }
        case Op::MovPcReg: {
            uint32_t target = read_reg(rf, in.rm, pc);
            next_pc = target;
            res.events.push_back(ev_branch(pc, target));
            break;
        }
        case Op::Add:
        case Op::Sub:
        case Op::Subs: {
            uint32_t a = read_reg(rf, in.rn, pc);
            uint32_t b = in.op2_is_imm ? in.imm : read_reg(rf, in.rm, pc);
            uint32_t v = (in.op == Op::Add) ? a + b : a - b;
            if (in.op == Op::Subs) set_flags_sub(rf.flags, a, b);
            rf.r[in.rd] = v;
            if (in.op2_is_imm) res.events.push_back(ev_reg(pc, in.rd, v, {in.rn}));
            else res.events.push_back(ev_reg(pc, in.rd, v, {in.rn, in.rm}));
            break;
        }
        case Op::Cmp: {
            uint32_t a = read_reg(rf, in.rn, pc);
            uint32_t b = in.op2_is_imm ? in.imm : read_reg(rf, in.rm, pc);
            set_flags_sub(rf.flags, a, b);
            break;
        }
        case Op::LdrImm:
        case Op::LdrLit: {
            uint32_t base = (in.op == Op::LdrLit) ? pc + 8 : read_reg(rf, in.rn, pc);
            uint32_t addr = base + in.imm;
            uint32_t v = 0;
            if (data_read(addr, v))
                res.events.push_back(ev_mem(pc, false, addr, v, {in.rn}));
            rf.r[in.rd] = v;
            res.events.push_back(ev_reg(pc, in.rd, v, {in.rn}));
            break;
        }
        case Op::StrImm: {
            uint32_t addr = read_reg(rf, in.rn, pc) + in.imm;
            uint32_t v = read_reg(rf, in.rd, pc);
            if (data_write(addr, v))
                res.events.push_back(ev_mem(pc, true, addr, v, {in.rd, in.rn}));
            break;
        }
        case Op::Ldm:
        case Op::Stm: {
            uint32_t addr = read_reg(rf, in.rn, pc);
            for (uint8_t r = 0; r < 16; ++r) {
                if (!(in.reglist & (1u << r))) continue;
                if (in.op == Op::Stm) {
                    uint32_t v = read_reg(rf, r, pc);
                    if (data_write(addr, v))
                        res.events.push_back(ev_mem(pc, true, addr, v, {r, in.rn}));
                } else {
                    uint32_t v = 0;
                    if (data_read(addr, v))
                        res.events.push_back(ev_mem(pc, false, addr, v, {in.rn}));
                    rf.r[r] = v;
                    res.events.push_back(ev_reg(pc, r, v, {in.rn}));
                }
                addr += 4;
            }
            if (in.writeback) {
                rf.r[in.rn] = addr;
                res.events.push_back(ev_reg(pc, in.rn, addr, {in.rn}));
            }
            break;
        }
        case Op::B: {
            uint32_t target = pc + 8 + uint32_t(in.branch_off) * 4;
            next_pc = target;
            res.events.push_back(ev_branch(pc, target));
            break;
        }
        case Op::Nop:
            break;
    }

    rf.pc() = next_pc;
    return res;
}

RunResult run_until(CpuState& state, MemoryImage& mem, uint32_t end, uint64_t budget) {
    RunResult out;
    while (out.steps < budget) {
        if (state.regs.pc() == end) {
            out.stop = StopReason::ReachedEnd;
            return out;
        }
        StepResult sr = step(state, mem);
        out.steps += 1;
        for (auto& e : sr.events) out.trace.push_back(e);
        if (sr.fault == Fault::UnmappedAccess) {
            out.access_faults.push_back(sr.access);
        } else if (sr.fault != Fault::None) {
            out.stop = StopReason::Faulted;
            out.fault = sr.fault;
            return out;
        }
    }
    if (state.regs.pc() == end) {
        out.stop = StopReason::ReachedEnd;
    } else {
        out.stop = StopReason::BudgetExhausted;
    }
    return out;
}

}  // namespace plcpatch
