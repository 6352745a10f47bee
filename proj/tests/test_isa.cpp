#include "doctest.h"

#include <random>
#include <set>

#include "plcpatch/isa.hpp"
#include "support/ref_interp.hpp"

using namespace plcpatch;

namespace {

MemoryImage flat_image(uint32_t base, uint32_t len) {
    MemoryImage img;
    img.add_region({RegionKind::AppCode, base, len, {}});
    img.add_region({RegionKind::AddressTable, base + len, 0x100, {}});
    img.app_entry = base;
    img.finalize();
    return img;
}

void put_program(MemoryImage& img, uint32_t base, const std::vector<Instruction>& prog) {
    for (size_t i = 0; i < prog.size(); ++i) img.write32(base + uint32_t(i * 4), encode(prog[i]));
}

// Enumerates every instruction the subset admits (exhaustive over fields).
template <typename Fn>
void for_each_subset_instruction(Fn&& fn) {
    const Cond conds[] = {Cond::Eq, Cond::Ne, Cond::Hs, Cond::Lo, Cond::Ge, Cond::Lt, Cond::Al};
    for (Cond c : conds) {
        for (uint8_t rd = 0; rd < 15; ++rd) {
            for (uint32_t imm = 0; imm < 256; imm += 17) fn(mov_imm(rd, imm, c));
            for (uint8_t rm = 0; rm < 16; ++rm) fn(mov_reg(rd, rm, c));
        }
        for (uint8_t rm = 0; rm < 15; ++rm) fn(mov_pc_reg(rm, c));
        for (uint8_t rd = 0; rd < 15; rd += 3)
            for (uint8_t rn = 0; rn < 15; rn += 3) {
                for (uint32_t imm = 0; imm < 256; imm += 51) {
                    fn(add_imm(rd, rn, imm, c));
                    fn(sub_imm(rd, rn, imm, c));
                    fn(subs_imm(rd, rn, imm, c));
                }
                for (uint8_t rm = 0; rm < 15; rm += 4) {
                    fn(add_reg(rd, rn, rm, c));
                    fn(sub_reg(rd, rn, rm, c));
                    fn(subs_reg(rd, rn, rm, c));
                }
            }
        for (uint8_t rn = 0; rn < 15; ++rn) {
            for (uint32_t imm = 0; imm < 256; imm += 37) fn(cmp_imm(rn, imm, c));
            for (uint8_t rm = 0; rm < 15; rm += 2) fn(cmp_reg(rn, rm, c));
        }
        for (uint8_t rd = 0; rd < 15; rd += 2)
            for (uint8_t rn = 0; rn < 15; rn += 2)
                for (uint32_t imm = 0; imm <= 0xFFF; imm += 0x123) {
                    fn(ldr_imm(rd, rn, imm, c));
                    fn(str_imm(rd, rn, imm, c));
                }
        for (uint8_t rd = 0; rd < 15; rd += 2)
            for (uint32_t imm = 0; imm <= 0xFFF; imm += 0x111) fn(ldr_lit(rd, imm, c));
        for (uint8_t rn = 0; rn < 13; rn += 3)
            for (uint16_t list : {uint16_t(1), uint16_t(0x0F), uint16_t(0x55), uint16_t(0x7FFF & ~(1 << rn))}) {
                if (list == 0) continue;
                fn(ldm(rn, list, false, c));
                fn(stm(rn, list, false, c));
                uint16_t wb_list = list & ~(1u << rn);
                if (wb_list) {
                    fn(ldm(rn, wb_list, true, c));
                    fn(stm(rn, wb_list, true, c));
                }
            }
        for (int32_t off : {-(1 << 23), -100, -1, 0, 1, 77, (1 << 23) - 1}) fn(branch(off, c));
    }
    fn(nop());
}

}  // namespace

TEST_CASE("decode/encode round-trips every subset instruction") {
    size_t count = 0;
    for_each_subset_instruction([&](const Instruction& in) {
        uint32_t w = encode(in);
        auto back = decode(w);
        REQUIRE(back.has_value());
        CHECK(*back == in);
        CHECK(encode(*back) == w);
        ++count;
    });
    CHECK(count > 10000);
}

TEST_CASE("decode is strict: re-encode identity or undefined, over low-half sweeps") {
    // All 2^16 low halfwords against a spread of high halfwords covering every
    // instruction class and both valid and invalid condition nibbles.
    const uint32_t highs[] = {
        0xE3A00000 >> 16,  // mov imm
        0xE1A00000 >> 16,  // mov reg
        0xE2422000 >> 16,  // sub imm
        0xE0522000 >> 16,  // subs reg
        0xE3520000 >> 16,  // cmp imm
        0xE5962000 >> 16,  // ldr
        0xE5862000 >> 16,  // str
        0xE59F2000 >> 16,  // ldr literal
        0xE8A40000 >> 16,  // stm writeback
        0xE8940000 >> 16,  // ldm
        0xEA000000 >> 16,  // b
        0xE3200000 >> 16,  // hint space
        0x1A000000 >> 16,  // bne
        0x43A00000 >> 16,  // invalid cond (MI)
        0xE0000000 >> 16,  // and: outside subset
        0xE7920000 >> 16,  // register-offset ldr: outside subset
    };
    for (uint32_t high : highs) {
        for (uint32_t low = 0; low <= 0xFFFF; ++low) {
            uint32_t w = (high << 16) | low;
            auto d = decode(w);
            if (d) {
                CHECK(encode(*d) == w);
            }
        }
    }
}

TEST_CASE("figure idioms decode as expected") {
    // ldr r6, [fp]: the hooked table load shape
    Instruction i = ldr_imm(6, REG_FP, 0);
    auto d = decode(encode(i));
    REQUIRE(d.has_value());
    CHECK(d->op == Op::LdrImm);
    CHECK(d->rd == 6);
    CHECK(d->rn == REG_FP);
    CHECK(d->imm == 0);

    CHECK(decode(encode(mov_imm(0, 5)))->imm == 5);
    CHECK_THROWS_AS(ldr_imm(6, REG_FP, 0x1000), OffsetOutOfRange);
    CHECK(encode(mov_imm(3, 0)) == 0xE3A03000);
}

TEST_CASE("subs sets flags and conditional stm is suppressed") {
    MemoryImage img = flat_image(0x1000, 0x100);
    put_program(img, 0x1000, {subs_imm(2, 2, 1), stm(4, 1u << 3, false, Cond::Hs)});
    CpuState st;
    st.regs.pc() = 0x1000;
    st.regs.r[2] = 1;
    st.regs.r[4] = 0x1080;

    auto r1 = step(st, img);
    CHECK(st.regs.r[2] == 0);
    CHECK(st.regs.flags.z);
    CHECK(st.regs.flags.c);  // 1 >= 1, no borrow

    // Now clear C and confirm the hs-store emits nothing.
    st.regs.flags.c = false;
    auto r2 = step(st, img);
    CHECK(r2.events.empty());
    CHECK(st.regs.pc() == 0x1008);
    CHECK(st.step_count == 2);
    (void)r1;
}

TEST_CASE("pc reads as instruction address plus 8 (call idiom)") {
    MemoryImage img = flat_image(0x2000, 0x100);
    put_program(img, 0x2000, {mov_reg(REG_LR, REG_PC), mov_pc_reg(6)});
    CpuState st;
    st.regs.pc() = 0x2000;
    st.regs.r[6] = 0x2040;
    step(st, img);
    CHECK(st.regs.lr() == 0x2008);  // instruction after mov pc, r6
    auto r = step(st, img);
    REQUIRE(r.events.size() == 1);
    CHECK(r.events[0].kind == EventKind::Branch);
    CHECK(st.regs.pc() == 0x2040);
}

TEST_CASE("ldm/stm mem-event count equals list population, writeback advances base") {
    MemoryImage img = flat_image(0x3000, 0x200);
    put_program(img, 0x3000, {stm(4, 0b0111, true)});
    CpuState st;
    st.regs.pc() = 0x3000;
    st.regs.r[0] = 0xAA;
    st.regs.r[1] = 0xBB;
    st.regs.r[2] = 0xCC;
    st.regs.r[4] = 0x3100;
    auto r = step(st, img);
    int mem_events = 0;
    for (auto& e : r.events)
        if (e.kind == EventKind::MemWrite) ++mem_events;
    CHECK(mem_events == 3);
    CHECK(st.regs.r[4] == 0x310C);
    CHECK(img.read32(0x3100) == 0xAA);
    CHECK(img.read32(0x3104) == 0xBB);
    CHECK(img.read32(0x3108) == 0xCC);
}

TEST_CASE("unmapped access surfaces without halting") {
    MemoryImage img = flat_image(0x4000, 0x100);
    put_program(img, 0x4000, {str_imm(0, 1, 0), mov_imm(5, 9)});
    CpuState st;
    st.regs.pc() = 0x4000;
    st.regs.r[1] = 0xDEAD0000;  // far outside any region
    auto r = step(st, img);
    CHECK(r.fault == Fault::UnmappedAccess);
    CHECK(r.access.addr == 0xDEAD0000);
    CHECK(r.access.is_write);
    CHECK_FALSE(st.halted);
    step(st, img);
    CHECK(st.regs.r[5] == 9);
}

TEST_CASE("run_until stops at end, reports budget exhaustion with partial trace") {
    MemoryImage img = flat_image(0x5000, 0x100);
    put_program(img, 0x5000, {branch(0)});  // b +0 -> target = pc+8 = 0x5008
    CpuState st;
    st.regs.pc() = 0x5000;
    auto r = run_until(st, img, 0x5008, 100);
    CHECK(r.stop == StopReason::ReachedEnd);
    CHECK(r.steps == 1);

    // Tight infinite loop: b -2 branches to itself.
    put_program(img, 0x5010, {branch(-2)});
    CpuState st2;
    st2.regs.pc() = 0x5010;
    auto r2 = run_until(st2, img, 0x5008, 1000);
    CHECK(r2.stop == StopReason::BudgetExhausted);
    CHECK(r2.steps == 1000);
    CHECK(r2.trace.size() == 1000);
}

TEST_CASE("conditional copy loop emits one store per element") {
    // r0 = dst, r1 = src, r2 = byte count; subs/ldrhs/addhs/stmhs/bhs loop.
    MemoryImage img = flat_image(0x6000, 0x400);
    std::vector<Instruction> prog = {
        subs_imm(2, 2, 4),
        ldr_imm(3, 1, 0, Cond::Hs),
        add_imm(1, 1, 4, Cond::Hs),
        stm(0, 1u << 3, true, Cond::Hs),
        branch(-6, Cond::Hs),  // back to subs at 0x6000
        branch(0),             // jump to the end marker at pc+8
    };
    put_program(img, 0x6000, prog);
    for (int i = 0; i < 4; ++i) img.write32(0x6100 + i * 4, 0x11110000 + i);
    CpuState st;
    st.regs.pc() = 0x6000;
    st.regs.r[0] = 0x6200;
    st.regs.r[1] = 0x6100;
    st.regs.r[2] = 16;
    auto r = run_until(st, img, 0x601C, 1000);
    CHECK(r.stop == StopReason::ReachedEnd);
    int stores = 0;
    for (auto& e : r.trace)
        if (e.kind == EventKind::MemWrite) ++stores;
    CHECK(stores == 4);
    for (int i = 0; i < 4; ++i) CHECK(img.read32(0x6200 + i * 4) == 0x11110000u + i);
}

TEST_CASE("flag semantics match the reference on exhaustive 8-bit grids") {
    for (uint32_t a = 0; a < 256; ++a) {
        for (uint32_t b = 0; b < 256; ++b) {
            // subs r0, r1, r2 with r1=a<<24 | a, r2=b<<24 | b exercises sign bits
            uint32_t av = (a << 24) | a;
            uint32_t bv = (b << 24) | b;

            MemoryImage img = flat_image(0x7000, 0x10);
            img.write32(0x7000, encode(subs_reg(0, 1, 2)));
            CpuState st;
            st.regs.pc() = 0x7000;
            st.regs.r[1] = av;
            st.regs.r[2] = bv;
            step(st, img);

            refsim::Machine m;
            m.mem_base = 0x7000;
            m.mem.resize(0x10);
            uint32_t w = encode(subs_reg(0, 1, 2));
            m.mem[0] = w & 0xFF;
            m.mem[1] = (w >> 8) & 0xFF;
            m.mem[2] = (w >> 16) & 0xFF;
            m.mem[3] = (w >> 24) & 0xFF;
            m.r[15] = 0x7000;
            m.r[1] = av;
            m.r[2] = bv;
            m.step();

            REQUIRE(st.regs.r[0] == m.r[0]);
            REQUIRE(st.regs.flags.n == m.n);
            REQUIRE(st.regs.flags.z == m.z);
            REQUIRE(st.regs.flags.c == m.c);
            REQUIRE(st.regs.flags.v == m.v);
        }
    }
}

TEST_CASE("random programs agree with the reference interpreter end to end") {
    std::mt19937 rng(12345);
    const uint32_t base = 0x10000;
    const uint32_t code_len = 0x400;   // 256 instruction slots
    const uint32_t data_len = 0x400;

    auto rand_reg = [&]() { return uint8_t(rng() % 13); };  // r0..r12

    for (int trial = 0; trial < 60; ++trial) {
        std::vector<Instruction> prog;
        for (int i = 0; i < 200; ++i) {
            switch (rng() % 10) {
                case 0: prog.push_back(mov_imm(rand_reg(), rng() % 256)); break;
                case 1: prog.push_back(mov_reg(rand_reg(), rand_reg())); break;
                case 2: prog.push_back(add_imm(rand_reg(), rand_reg(), rng() % 256)); break;
                case 3: prog.push_back(sub_imm(rand_reg(), rand_reg(), rng() % 256)); break;
                case 4: prog.push_back(subs_imm(rand_reg(), rand_reg(), rng() % 256)); break;
                case 5: prog.push_back(cmp_imm(rand_reg(), rng() % 256)); break;
                case 6: {
                    // loads/stores pinned to the data window via r12
                    uint32_t off = (rng() % (data_len / 4)) * 4;
                    if (rng() & 1) prog.push_back(ldr_imm(uint8_t(rng() % 11), 12, off));
                    else prog.push_back(str_imm(uint8_t(rng() % 11), 12, off));
                    break;
                }
                case 7: {
                    Cond cs[] = {Cond::Eq, Cond::Ne, Cond::Hs, Cond::Lo, Cond::Ge, Cond::Lt};
                    prog.push_back(mov_imm(rand_reg(), rng() % 256, cs[rng() % 6]));
                    break;
                }
                case 8: {
                    // short forward conditional hop stays inside the program
                    Cond cs[] = {Cond::Eq, Cond::Ne, Cond::Hs, Cond::Lo};
                    prog.push_back(branch(int32_t(rng() % 4), cs[rng() % 4]));
                    break;
                }
                default: prog.push_back(nop()); break;
            }
        }

        MemoryImage img;
        img.add_region({RegionKind::AppCode, base, code_len + data_len, {}});
        img.add_region({RegionKind::AddressTable, base + code_len + data_len, 0x100, {}});
        img.app_entry = base;
        img.finalize();
        put_program(img, base, prog);

        refsim::Machine m;
        m.mem_base = base;
        m.mem.resize(code_len + data_len);
        for (size_t i = 0; i < prog.size(); ++i) {
            uint32_t w = encode(prog[i]);
            m.mem[i * 4] = w & 0xFF;
            m.mem[i * 4 + 1] = (w >> 8) & 0xFF;
            m.mem[i * 4 + 2] = (w >> 16) & 0xFF;
            m.mem[i * 4 + 3] = (w >> 24) & 0xFF;
        }

        CpuState st;
        st.regs.pc() = base;
        st.regs.r[12] = base + code_len;
        m.r[15] = base;
        m.r[12] = base + code_len;

        for (int s = 0; s < 10000; ++s) {
            if (st.regs.pc() == base + uint32_t(prog.size() * 4)) break;
            StepResult sr = step(st, img);
            bool ok = m.step();
            if (sr.fault == Fault::UnmappedFetch || sr.fault == Fault::UndefinedInstruction) {
                CHECK_FALSE(ok);
                break;
            }
            REQUIRE(ok);
            REQUIRE(st.regs.pc() == m.r[15]);
        }
        for (int r = 0; r < 15; ++r) REQUIRE(st.regs.r[r] == m.r[r]);
        REQUIRE(st.regs.flags.n == m.n);
        REQUIRE(st.regs.flags.z == m.z);
        REQUIRE(st.regs.flags.c == m.c);
        REQUIRE(st.regs.flags.v == m.v);
        // memory windows must agree as well
        for (uint32_t a = 0; a < data_len; a += 4)
            REQUIRE(img.read32(base + code_len + a) == m.load(base + code_len + a));
    }
}

TEST_CASE("step determinism: identical state and memory produce identical results") {
    MemoryImage img = flat_image(0x8000, 0x100);
    put_program(img, 0x8000, {subs_imm(1, 1, 3), branch(2, Cond::Hs), mov_imm(2, 7)});
    for (uint32_t seed_r1 : {0u, 1u, 3u, 100u}) {
        CpuState a, b;
        a.regs.pc() = b.regs.pc() = 0x8000;
        a.regs.r[1] = b.regs.r[1] = seed_r1;
        MemoryImage ia = img, ib = img;
        for (int i = 0; i < 3; ++i) {
            auto ra = step(a, ia);
            auto rb = step(b, ib);
            REQUIRE(ra.events.size() == rb.events.size());
            REQUIRE(a == b);
        }
        CHECK(ia == ib);
    }
}

TEST_CASE("step_count increments exactly once per step; sequential pc advance") {
    MemoryImage img = flat_image(0x9000, 0x40);
    put_program(img, 0x9000, {nop(), nop(), mov_imm(0, 1), nop()});
    CpuState st;
    st.regs.pc() = 0x9000;
    for (uint64_t i = 1; i <= 4; ++i) {
        uint32_t before = st.regs.pc();
        step(st, img);
        CHECK(st.step_count == i);
        CHECK(st.regs.pc() == before + 4);
    }
}
