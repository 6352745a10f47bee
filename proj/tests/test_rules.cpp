#include "doctest.h"

#include "plcpatch/rules.hpp"

using namespace plcpatch;

namespace {

MemoryImage layout_image() {
    MemoryImage img;
    img.add_region({RegionKind::Mmio, 0x1000, 0x100, {}});
    img.add_region({RegionKind::AppStack, 0x2000, 0x1000, {}});
    img.add_region({RegionKind::RuntimeStack, 0x3000, 0x1000, {}});
    img.add_region({RegionKind::RuntimeCode, 0x5000, 0x400, {}});
    img.add_region({RegionKind::AppCode, 0x6000, 0x400, {}});
    img.add_region({RegionKind::AddressTable, 0x7000, 0x400, {}});
    img.add_region({RegionKind::Data, 0x8000, 0x400, {}});
    img.app_entry = 0x6000;
    img.finalize();
    return img;
}

AccessSample store(uint32_t pc, uint32_t addr, uint64_t cycle = 1) {
    AccessSample s;
    s.is_write = true;
    s.pc = pc;
    s.addr = addr;
    s.cycle = cycle;
    return s;
}

AccessSample load(uint32_t pc, uint32_t addr, uint64_t cycle = 1) {
    AccessSample s;
    s.is_write = false;
    s.pc = pc;
    s.addr = addr;
    s.cycle = cycle;
    return s;
}

}  // namespace

TEST_CASE("default ruleset parses with resolved patch identifiers") {
    auto rules = parse_ruleset(default_ruleset_text());
    REQUIRE(rules.size() == 4);
    CHECK(rules[0].name == "cmd_injection");
    CHECK(rules[0].patch_identifier == "table_restore");
    CHECK(rules[1].name == "oob_write");
    CHECK(rules[1].action == RuleAction::Alert);
    CHECK(rules[3].terms.size() == 1);
    CHECK(rules[3].terms[0].profile_deviation);
}

TEST_CASE("empty ruleset text parses to an empty list") {
    CHECK(parse_ruleset("").empty());
    CHECK(parse_ruleset("# only a comment\n").empty());
}

TEST_CASE("the out-of-bounds-write rule parses to the documented shape") {
    auto rules = parse_ruleset(
        "rule oob_write {\n"
        "  message = \"m\"\n"
        "  action  = ALERT\n"
        "  patch   = bound_check\n"
        "  when    = WRITE_ADDRESS >= RUNTIME_STACK\n"
        "}\n");
    REQUIRE(rules.size() == 1);
    REQUIRE(rules[0].terms.size() == 1);
    CHECK(rules[0].terms[0].lhs == RuleSymbol::WriteAddress);
    CHECK(rules[0].terms[0].cmp == RuleCmp::Ge);
    CHECK(rules[0].terms[0].rhs == RuleSymbol::RuntimeStack);
}

TEST_CASE("unknown symbols and patch ids are rejected") {
    CHECK_THROWS_AS(parse_ruleset("rule x {\n action = ALERT\n patch = bound_check\n"
                                  " when = BOGUS >= RUNTIME_STACK\n}\n"),
                    UnknownSymbolError);
    CHECK_THROWS_AS(parse_ruleset("rule x {\n action = ALERT\n patch = nonexistent\n"
                                  " when = WRITE_ADDRESS >= RUNTIME_STACK\n}\n"),
                    UnknownPatchIdError);
    CHECK_THROWS_AS(parse_ruleset("rule x {\n action = MAYBE\n patch = bound_check\n"
                                  " when = WRITE_ADDRESS >= RUNTIME_STACK\n}\n"),
                    RuleParseError);
}

TEST_CASE("store from app code into the runtime stack fires oob_write") {
    MemoryImage img = layout_image();
    auto rules = parse_ruleset(default_ruleset_text());
    auto d = evaluate(rules, store(0x6010, 0x3008), img);
    REQUIRE(d.has_value());
    CHECK(d->rule == "oob_write");
    CHECK(d->patch_identifier == "bound_check");
    CHECK(d->violating_address == 0x3008);
}

TEST_CASE("reads: runtime stack fires, table and literal-pool reads stay clean") {
    MemoryImage img = layout_image();
    auto rules = parse_ruleset(default_ruleset_text());
    CHECK(evaluate(rules, load(0x6010, 0x3008), img).has_value());    // runtime stack
    CHECK_FALSE(evaluate(rules, load(0x6010, 0x7008), img).has_value());  // table (indirect call)
    CHECK_FALSE(evaluate(rules, load(0x6010, 0x6020), img).has_value());  // code literal pool
    CHECK_FALSE(evaluate(rules, load(0x6010, 0x8004), img).has_value());  // data constants
}

TEST_CASE("address-table stores alert after the first scan cycle only") {
    MemoryImage img = layout_image();
    auto rules = parse_ruleset(default_ruleset_text());
    CHECK_FALSE(evaluate(rules, store(0x6010, 0x7010, /*cycle=*/0), img).has_value());
    auto d = evaluate(rules, store(0x6010, 0x7010, /*cycle=*/2), img);
    REQUIRE(d.has_value());
    CHECK(d->rule == "cmd_injection");
    CHECK(d->patch_identifier == "table_restore");
}

TEST_CASE("first-match-wins: a table store matches cmd_injection before oob_write") {
    MemoryImage img = layout_image();
    auto rules = parse_ruleset(default_ruleset_text());
    // the table lies above RUNTIME_STACK, so oob_write also matches
    auto d = evaluate(rules, store(0x6010, 0x7010, 1), img);
    REQUIRE(d.has_value());
    CHECK(d->rule == "cmd_injection");
}

TEST_CASE("WARN rules log and evaluation continues") {
    MemoryImage img = layout_image();
    auto rules = parse_ruleset(
        "rule noisy {\n"
        "  message = \"w\"\n  action = WARN\n  patch = bound_check\n"
        "  when = WRITE_ADDRESS >= APP_STACK_BASE\n}\n"
        "rule real {\n"
        "  message = \"a\"\n  action = ALERT\n  patch = bound_check\n"
        "  when = WRITE_ADDRESS >= RUNTIME_STACK\n}\n");
    std::vector<Detection> warns;
    EvalContext ctx;
    ctx.warn_sink = &warns;
    auto d = evaluate(rules, store(0x6010, 0x3010), img, ctx);
    REQUIRE(d.has_value());
    CHECK(d->rule == "real");
    REQUIRE(warns.size() == 1);
    CHECK(warns[0].rule == "noisy");
}

TEST_CASE("profile deviation fires only on unseen frame-relative write offsets") {
    MemoryImage img = layout_image();
    auto rules = parse_ruleset(default_ruleset_text());
    StackWriteProfile profile;
    profile.write_offsets[0x6000] = {0x8, 0xC, 0x10};
    EvalContext ctx;
    ctx.profile = &profile;

    AccessSample in_profile = store(0x6010, 0x2008 + 0x0);
    in_profile.has_frame = true;
    in_profile.frame_base = 0x2000;
    in_profile.fn_entry = 0x6000;
    in_profile.addr = 0x2008;  // offset 0x8: covered
    CHECK_FALSE(evaluate(rules, in_profile, img, ctx).has_value());

    AccessSample off_profile = in_profile;
    off_profile.addr = 0x2020;  // offset 0x20: absent
    auto d = evaluate(rules, off_profile, img, ctx);
    REQUIRE(d.has_value());
    CHECK(d->rule == "input_deviation");

    // without a profile the deviation rule never fires
    CHECK_FALSE(evaluate(rules, off_profile, img).has_value());
}

TEST_CASE("immune cells downgrade table-store alerts to warnings") {
    MemoryImage img = layout_image();
    auto rules = parse_ruleset(default_ruleset_text());
    std::set<uint32_t> immune = {0x7010};
    std::vector<Detection> warns;
    EvalContext ctx;
    ctx.immune_cells = &immune;
    ctx.warn_sink = &warns;
    CHECK_FALSE(evaluate(rules, store(0x6010, 0x7010, 2), img, ctx).has_value());
    REQUIRE(warns.size() == 1);
    CHECK(warns[0].rule == "cmd_injection");
    CHECK(warns[0].action == RuleAction::Warn);
    // a different table cell still alerts
    CHECK(evaluate(rules, store(0x6010, 0x7020, 2), img, ctx).has_value());
}

TEST_CASE("evaluate is pure: identical inputs give identical results") {
    MemoryImage img = layout_image();
    auto rules = parse_ruleset(default_ruleset_text());
    AccessSample s = store(0x6010, 0x3008);
    for (int i = 0; i < 5; ++i) {
        auto a = evaluate(rules, s, img);
        auto b = evaluate(rules, s, img);
        REQUIRE(a.has_value());
        REQUIRE(b.has_value());
        CHECK(a->rule == b->rule);
        CHECK(a->violating_address == b->violating_address);
    }
}

TEST_CASE("unmapped writes above the runtime stack still classify as oob_write") {
    MemoryImage img = layout_image();
    auto rules = parse_ruleset(default_ruleset_text());
    AccessSample s = store(0x6010, 0x4800);  // gap between stacks and code
    s.mapped = false;
    auto d = evaluate(rules, s, img);
    REQUIRE(d.has_value());
    CHECK(d->rule == "oob_write");
}
