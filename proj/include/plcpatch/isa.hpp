#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "plcpatch/memory_image.hpp"

namespace plcpatch {

// Fixed-width 32-bit ARM-style subset. The byte-exact encoding table lives in
// docs/encoding.md; decode() accepts exactly the words encode() can produce.

enum class Cond : uint8_t {
    Eq = 0x0,
    Ne = 0x1,
    Hs = 0x2,
    Lo = 0x3,
    Ge = 0xA,
    Lt = 0xB,
    Al = 0xE,
};

enum class Op : uint8_t {
    MovImm,
    MovReg,
    MovPcReg,  // mov pc, rm: the indirect-branch idiom
    Add,
    Sub,
    Subs,
    Cmp,
    LdrImm,   // ldr rd, [rn, #imm12]
    LdrLit,   // ldr rd, [pc, #imm12]
    StrImm,   // str rd, [rn, #imm12]
    Ldm,      // ldm rn[!], {list}  (increment-after)
    Stm,      // stm rn[!], {list}
    B,        // cond == Al is the plain branch, anything else the conditional
    Nop,
};

constexpr uint8_t REG_SP = 13;
constexpr uint8_t REG_LR = 14;
constexpr uint8_t REG_PC = 15;
constexpr uint8_t REG_FP = 11;

struct Instruction {
    Op op = Op::Nop;
    Cond cond = Cond::Al;
    uint8_t rd = 0;
    uint8_t rn = 0;
    uint8_t rm = 0;
    bool op2_is_imm = false;  // data-processing operand 2 selector
    uint32_t imm = 0;         // dp imm8 or ldr/str imm12
    int32_t branch_off = 0;   // B: signed word offset, target = pc + 8 + 4*off
    uint16_t reglist = 0;     // ldm/stm
    bool writeback = false;   // ldm/stm

    bool operator==(const Instruction&) const = default;
};

class EncodeError : public std::runtime_error {
public:
    explicit EncodeError(const std::string& what) : std::runtime_error(what) {}
};
class OffsetOutOfRange : public EncodeError {
public:
    using EncodeError::EncodeError;
};

// Instruction factory helpers (validate operands, throw EncodeError).
Instruction mov_imm(uint8_t rd, uint32_t imm, Cond c = Cond::Al);
Instruction mov_reg(uint8_t rd, uint8_t rm, Cond c = Cond::Al);
Instruction mov_pc_reg(uint8_t rm, Cond c = Cond::Al);
Instruction add_imm(uint8_t rd, uint8_t rn, uint32_t imm, Cond c = Cond::Al);
Instruction add_reg(uint8_t rd, uint8_t rn, uint8_t rm, Cond c = Cond::Al);
Instruction sub_imm(uint8_t rd, uint8_t rn, uint32_t imm, Cond c = Cond::Al);
Instruction sub_reg(uint8_t rd, uint8_t rn, uint8_t rm, Cond c = Cond::Al);
Instruction subs_imm(uint8_t rd, uint8_t rn, uint32_t imm, Cond c = Cond::Al);
Instruction subs_reg(uint8_t rd, uint8_t rn, uint8_t rm, Cond c = Cond::Al);
Instruction cmp_imm(uint8_t rn, uint32_t imm, Cond c = Cond::Al);
Instruction cmp_reg(uint8_t rn, uint8_t rm, Cond c = Cond::Al);
Instruction ldr_imm(uint8_t rd, uint8_t rn, uint32_t imm12, Cond c = Cond::Al);
Instruction ldr_lit(uint8_t rd, uint32_t imm12, Cond c = Cond::Al);
Instruction str_imm(uint8_t rd, uint8_t rn, uint32_t imm12, Cond c = Cond::Al);
Instruction ldm(uint8_t rn, uint16_t list, bool writeback, Cond c = Cond::Al);
Instruction stm(uint8_t rn, uint16_t list, bool writeback, Cond c = Cond::Al);
Instruction branch(int32_t word_off, Cond c = Cond::Al);
Instruction nop();

uint32_t encode(const Instruction& instr);                 // throws EncodeError
std::optional<Instruction> decode(uint32_t word);          // nullopt = undefined instruction
std::string disassemble(const Instruction& instr);         // canonical mnemonic text

struct Flags {
    bool n = false, z = false, c = false, v = false;
    bool operator==(const Flags&) const = default;
};

bool cond_passes(Cond c, const Flags& f);

struct RegisterFile {
    std::array<uint32_t, 16> r{};  // r13 = sp, r14 = lr, r15 = pc
    Flags flags;

    uint32_t& pc() { return r[REG_PC]; }
    uint32_t pc() const { return r[REG_PC]; }
    uint32_t& sp() { return r[REG_SP]; }
    uint32_t& lr() { return r[REG_LR]; }
    bool operator==(const RegisterFile&) const = default;
};

struct CpuState {
    RegisterFile regs;
    bool halted = false;
    uint64_t step_count = 0;
    bool operator==(const CpuState&) const = default;
};

enum class EventKind : uint8_t { MemWrite, MemRead, RegWrite, Branch };

// One observable effect of an executed instruction. src_regs summarizes the
// register operands the instruction read, in operand order.
struct TraceEvent {
    uint32_t pc = 0;
    EventKind kind = EventKind::RegWrite;
    uint32_t addr = 0;   // mem events
    uint8_t width = 4;   // always 4 in this subset
    uint32_t value = 0;  // mem value / reg value written
    uint8_t reg = 0;     // reg written
    uint32_t target = 0; // branch target
    std::array<uint8_t, 3> src_regs{};
    uint8_t n_srcs = 0;
};

enum class Fault : uint8_t {
    None,
    UnmappedFetch,
    UndefinedInstruction,
    UnmappedAccess,
};

// Unmapped data accesses are surfaced as records, not crashes, so the rule
// engine can still inspect the attempted address.
struct AccessFault {
    uint32_t pc = 0;
    uint32_t addr = 0;
    bool is_write = false;
};

struct StepResult {
    std::vector<TraceEvent> events;
    Fault fault = Fault::None;
    AccessFault access;  // valid when fault == UnmappedAccess
};

// Executes exactly one instruction. UnmappedAccess completes the instruction
// (loads read 0, stores are dropped) and reports the attempt; UnmappedFetch
// and UndefinedInstruction halt the CPU.
StepResult step(CpuState& state, MemoryImage& mem);

enum class StopReason : uint8_t { ReachedEnd, BudgetExhausted, Faulted };

struct RunResult {
    StopReason stop = StopReason::ReachedEnd;
    Fault fault = Fault::None;
    std::vector<TraceEvent> trace;
    std::vector<AccessFault> access_faults;
    uint64_t steps = 0;
};

RunResult run_until(CpuState& state, MemoryImage& mem, uint32_t end, uint64_t budget);

}  // namespace plcpatch
