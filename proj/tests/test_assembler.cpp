#include "doctest.h"

#include "plcpatch/assembler.hpp"

using namespace plcpatch;

TEST_CASE("two instructions assemble to 8 bytes") {
    auto frag = assemble("mov r0, #0\nb done\ndone:\n", 0x1000);
    CHECK(frag.bytes.size() == 8);
    CHECK(frag.label("done") == 0x1008);
}

TEST_CASE("labels, conditionals and a loop round-trip through the interpreter") {
    const char* src = R"(
start:
    mov   r0, #0
    mov   r1, #5
loop:
    add   r0, r0, #2
    subs  r1, r1, #1
    bne   loop
    b     end
end:
)";
    auto frag = assemble(src, 0x2000);
    MemoryImage img;
    img.add_region({RegionKind::AppCode, 0x2000, 0x100, {}});
    img.add_region({RegionKind::AddressTable, 0x2100, 0x100, {}});
    img.app_entry = 0x2000;
    img.finalize();
    for (size_t i = 0; i < frag.bytes.size(); ++i) img.write8(0x2000 + uint32_t(i), frag.bytes[i]);

    CpuState st;
    st.regs.pc() = 0x2000;
    auto r = run_until(st, img, frag.label("end"), 1000);
    CHECK(r.stop == StopReason::ReachedEnd);
    CHECK(st.regs.r[0] == 10);
}

TEST_CASE("pooled literals resolve and load") {
    const char* src = R"(
    ldr r4, =0xCAFEBABE
    ldr r5, =@target
    b   done
target:
    nop
done:
)";
    auto frag = assemble(src, 0x3000);
    // 3 instructions + nop + 2 pool words
    CHECK(frag.bytes.size() == 4 * 4 + 8);

    MemoryImage img;
    img.add_region({RegionKind::AppCode, 0x3000, 0x100, {}});
    img.add_region({RegionKind::AddressTable, 0x3100, 0x100, {}});
    img.app_entry = 0x3000;
    img.finalize();
    for (size_t i = 0; i < frag.bytes.size(); ++i) img.write8(0x3000 + uint32_t(i), frag.bytes[i]);

    CpuState st;
    st.regs.pc() = 0x3000;
    step(st, img);
    step(st, img);
    CHECK(st.regs.r[4] == 0xCAFEBABE);
    CHECK(st.regs.r[5] == frag.label("target"));
}

TEST_CASE("call sequence matches the four-step indirect pattern") {
    // base-load, table-load, lr set, pc write: decodes back to the same ops
    const char* src = R"(
    ldr fp, =0xB6422000
    ldr r6, [fp, #8]
    mov lr, pc
    mov pc, r6
)";
    auto frag = assemble(src, 0xB6420010);
    REQUIRE(frag.bytes.size() == 4 * 4 + 4);  // + pool word

    auto word_at = [&](size_t i) {
        return uint32_t(frag.bytes[i * 4]) | uint32_t(frag.bytes[i * 4 + 1]) << 8 |
               uint32_t(frag.bytes[i * 4 + 2]) << 16 | uint32_t(frag.bytes[i * 4 + 3]) << 24;
    };
    auto i0 = decode(word_at(0));
    REQUIRE(i0);
    CHECK(i0->op == Op::LdrLit);
    CHECK(i0->rd == REG_FP);
    auto i1 = decode(word_at(1));
    REQUIRE(i1);
    CHECK(i1->op == Op::LdrImm);
    CHECK(i1->rd == 6);
    CHECK(i1->rn == REG_FP);
    CHECK(i1->imm == 8);
    auto i2 = decode(word_at(2));
    REQUIRE(i2);
    CHECK(i2->op == Op::MovReg);
    CHECK(i2->rd == REG_LR);
    CHECK(i2->rm == REG_PC);
    auto i3 = decode(word_at(3));
    REQUIRE(i3);
    CHECK(i3->op == Op::MovPcReg);
    CHECK(i3->rm == 6);
}

TEST_CASE("errors carry line numbers") {
    CHECK_THROWS_AS(assemble("mov r0, #5\nbogus r1\n", 0), AsmError);
    try {
        assemble("nop\nldr r1, [r2, #0x1000]\n", 0);
        FAIL("expected AsmError");
    } catch (const AsmError& e) {
        CHECK(e.line == 2);
    }
    CHECK_THROWS_AS(assemble("b nowhere\n", 0), AsmError);
    CHECK_THROWS_AS(assemble("x: nop\nx: nop\n", 0), AsmError);
}

TEST_CASE("extern symbols resolve in expressions") {
    auto frag = assemble("ldr r0, =mmio_base + 4\nmov pc, lr\n", 0x4000, {{"mmio_base", 0xB6000000}});
    // pool word (after the two instructions) should hold 0xB6000004
    uint32_t w = uint32_t(frag.bytes[8]) | uint32_t(frag.bytes[9]) << 8 |
                 uint32_t(frag.bytes[10]) << 16 | uint32_t(frag.bytes[11]) << 24;
    CHECK(w == 0xB6000004);

    // a pool directly after its own ldr is unreachable at pc+8 and must error
    CHECK_THROWS_AS(assemble("ldr r0, =0x1234\n", 0x4000), AsmError);
}

TEST_CASE("assemble-disassemble-assemble is a fixpoint") {
    const char* src = R"(
fn:
    subs  r2, r2, #4
    ldrhs r3, [r1]
    addhs r1, r1, #4
    stmhs r0!, {r3}
    bhs   fn
    cmp   r0, r5
    movlt r4, #1
    ldm   r9, {r2, r3, r7}
    str   r3, [r0, #0xFF0]
    nop
    mov   pc, lr
.word 0xB61B3240
)";
    auto frag = assemble(src, 0x5000);

    MemoryImage img;
    img.add_region({RegionKind::AppCode, 0x5000, 0x100, {}});
    img.add_region({RegionKind::AddressTable, 0x5100, 0x100, {}});
    img.app_entry = 0x5000;
    img.finalize();
    for (size_t i = 0; i < frag.bytes.size(); ++i) img.write8(0x5000 + uint32_t(i), frag.bytes[i]);

    std::string listing = disassemble_range(img, 0x5000, uint32_t(frag.bytes.size()));
    auto frag2 = assemble(listing, 0x5000);
    CHECK(frag2.bytes == frag.bytes);

    std::string listing2 = disassemble_range(img, 0x5000, uint32_t(frag.bytes.size()));
    CHECK(listing2 == listing);
}
