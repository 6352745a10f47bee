#include "plcpatch/rules.hpp"

#include <algorithm>
#include <sstream>

namespace plcpatch {

const std::set<std::string>& registered_patch_ids() {
    static const std::set<std::string> ids = {"bound_check", "table_restore"};
    return ids;
}

namespace {

std::string strip(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::optional<RuleSymbol> symbol_from(const std::string& s) {
    if (s == "WRITE_ADDRESS") return RuleSymbol::WriteAddress;
    if (s == "READ_ADDRESS") return RuleSymbol::ReadAddress;
    if (s == "RUNTIME_STACK") return RuleSymbol::RuntimeStack;
    if (s == "RUNTIME_DATA") return RuleSymbol::RuntimeData;
    if (s == "RUNTIME_ADDRESS_TABLE") return RuleSymbol::RuntimeAddressTable;
    if (s == "APP_STACK_BASE") return RuleSymbol::AppStackBase;
    return std::nullopt;
}

bool is_number(const std::string& s) {
    if (s.empty()) return false;
    if (s.size() > 2 && (s.compare(0, 2, "0x") == 0 || s.compare(0, 2, "0X") == 0)) return true;
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

RuleTerm parse_term(const std::string& text, const std::string& rule_name) {
    std::istringstream is(strip(text));
    std::vector<std::string> toks;
    std::string t;
    while (is >> t) toks.push_back(t);
    if (toks.size() == 1 && toks[0] == "PROFILE_DEVIATION") {
        RuleTerm term;
        term.profile_deviation = true;
        return term;
    }
    if (toks.size() != 3)
        throw RuleParseError("rule " + rule_name + ": malformed term: " + text);

    RuleTerm term;
    auto lhs = symbol_from(toks[0]);
    if (!lhs || (*lhs != RuleSymbol::WriteAddress && *lhs != RuleSymbol::ReadAddress))
        throw UnknownSymbolError("rule " + rule_name + ": bad lhs symbol: " + toks[0]);
    term.lhs = *lhs;

    const std::string& op = toks[1];
    if (op == ">=") term.cmp = RuleCmp::Ge;
    else if (op == ">") term.cmp = RuleCmp::Gt;
    else if (op == "<=") term.cmp = RuleCmp::Le;
    else if (op == "<") term.cmp = RuleCmp::Lt;
    else if (op == "==") term.cmp = RuleCmp::Eq;
    else if (op == "!=") term.cmp = RuleCmp::Ne;
    else if (op == "in") term.cmp = RuleCmp::InRegion;
    else throw RuleParseError("rule " + rule_name + ": bad comparison: " + op);

    if (term.cmp == RuleCmp::InRegion) {
        auto rk = region_from_name(toks[2]);
        if (!rk) throw UnknownSymbolError("rule " + rule_name + ": unknown region: " + toks[2]);
        term.region = *rk;
        return term;
    }
    if (is_number(toks[2])) {
        term.rhs = RuleSymbol::Literal;
        term.rhs_literal = uint32_t(std::stoul(toks[2], nullptr, 0));
        return term;
    }
    auto rhs = symbol_from(toks[2]);
    if (!rhs) throw UnknownSymbolError("rule " + rule_name + ": bad rhs symbol: " + toks[2]);
    term.rhs = *rhs;
    return term;
}

}  // namespace

std::vector<Rule> parse_ruleset(const std::string& text) {
    std::vector<Rule> rules;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    Rule cur;
    bool in_rule = false;
    bool saw_when = false;

    auto finish_rule = [&]() {
        if (cur.name.empty()) throw RuleParseError("rule without a name");
        if (!saw_when) throw RuleParseError("rule " + cur.name + " lacks a when clause");
        if (cur.patch_identifier.empty())
            throw RuleParseError("rule " + cur.name + " lacks a patch identifier");
        if (!registered_patch_ids().count(cur.patch_identifier))
            throw UnknownPatchIdError("rule " + cur.name + ": unknown patch id: " +
                                      cur.patch_identifier);
        rules.push_back(cur);
        cur = Rule{};
        in_rule = false;
        saw_when = false;
    };

    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = strip(line);
        if (line.empty()) continue;

        if (!in_rule) {
            if (line.rfind("rule ", 0) != 0)
                throw RuleParseError("line " + std::to_string(line_no) + ": expected 'rule <name> {'");
            std::string rest = strip(line.substr(5));
            if (rest.empty() || rest.back() != '{')
                throw RuleParseError("line " + std::to_string(line_no) + ": expected '{'");
            cur.name = strip(rest.substr(0, rest.size() - 1));
            if (cur.name.empty())
                throw RuleParseError("line " + std::to_string(line_no) + ": rule needs a name");
            in_rule = true;
            continue;
        }
        if (line == "}") {
            finish_rule();
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw RuleParseError("line " + std::to_string(line_no) + ": expected key = value");
        std::string key = strip(line.substr(0, eq));
        std::string val = strip(line.substr(eq + 1));
        if (key == "message") {
            if (val.size() >= 2 && val.front() == '"' && val.back() == '"')
                val = val.substr(1, val.size() - 2);
            cur.message = val;
        } else if (key == "action") {
            if (val == "ALERT") cur.action = RuleAction::Alert;
            else if (val == "WARN") cur.action = RuleAction::Warn;
            else throw RuleParseError("rule " + cur.name + ": action must be WARN or ALERT");
        } else if (key == "patch") {
            cur.patch_identifier = val;
        } else if (key == "when") {
            // conjunction via 'and'
            size_t pos = 0;
            while (true) {
                size_t andpos = val.find(" and ", pos);
                std::string term =
                    andpos == std::string::npos ? val.substr(pos) : val.substr(pos, andpos - pos);
                cur.terms.push_back(parse_term(term, cur.name));
                if (andpos == std::string::npos) break;
                pos = andpos + 5;
            }
            saw_when = true;
        } else {
            throw RuleParseError("rule " + cur.name + ": unknown field: " + key);
        }
    }
    if (in_rule) throw RuleParseError("unterminated rule block: " + cur.name);
    return rules;
}

const std::string& default_ruleset_text() {
    static const std::string text = R"(# Memory-violation ruleset.
# Evaluation is first-match-wins in file order; WARN rules log and continue.

rule cmd_injection {
  message = "store into the runtime address table"
  action  = ALERT
  patch   = table_restore
  when    = WRITE_ADDRESS in ADDRESS_TABLE
}

rule oob_write {
  message = "memory write at or above the runtime stack"
  action  = ALERT
  patch   = bound_check
  when    = WRITE_ADDRESS >= RUNTIME_STACK
}

rule oob_read {
  message = "memory read inside the runtime stack"
  action  = ALERT
  patch   = bound_check
  when    = READ_ADDRESS in RUNTIME_STACK
}

rule input_deviation {
  message = "stack write at an offset absent from the baseline profile"
  action  = ALERT
  patch   = bound_check
  when    = PROFILE_DEVIATION
}
)";
    return text;
}

namespace {

uint32_t resolve_symbol(RuleSymbol sym, const AccessSample& s, const MemoryImage& img,
                        bool& applicable) {
    applicable = true;
    switch (sym) {
        case RuleSymbol::WriteAddress:
            if (!s.is_write) applicable = false;
            return s.addr;
        case RuleSymbol::ReadAddress:
            if (s.is_write) applicable = false;
            return s.addr;
        case RuleSymbol::RuntimeStack: {
            const Region* r = img.region(RegionKind::RuntimeStack);
            if (!r) { applicable = false; return 0; }
            return r->base;
        }
        case RuleSymbol::RuntimeData: {
            const Region* r = img.region(RegionKind::Data);
            if (!r) { applicable = false; return 0; }
            return r->base;
        }
        case RuleSymbol::RuntimeAddressTable: {
            const Region* r = img.region(RegionKind::AddressTable);
            if (!r) { applicable = false; return 0; }
            return r->base;
        }
        case RuleSymbol::AppStackBase: {
            const Region* r = img.region(RegionKind::AppStack);
            if (!r) { applicable = false; return 0; }
            return r->base;
        }
        case RuleSymbol::Literal:
            return 0;
    }
    applicable = false;
    return 0;
}

bool term_matches(const RuleTerm& t, const AccessSample& s, const MemoryImage& img,
                  const EvalContext& ctx) {
    if (t.profile_deviation) {
        if (!ctx.profile || !s.is_write || !s.has_frame) return false;
        if (s.addr < s.frame_base) return false;
        const Region* stack = img.region(RegionKind::AppStack);
        if (!stack || !stack->contains(s.addr)) return false;
        uint32_t offset = s.addr - s.frame_base;
        return !ctx.profile->covers_write(s.fn_entry, offset);
    }
    bool ok = true;
    uint32_t lhs = resolve_symbol(t.lhs, s, img, ok);
    if (!ok) return false;
    if (t.cmp == RuleCmp::InRegion) {
        auto k = img.try_classify(s.addr);
        return k.has_value() && *k == t.region;
    }
    uint32_t rhs = t.rhs == RuleSymbol::Literal ? t.rhs_literal : resolve_symbol(t.rhs, s, img, ok);
    if (!ok) return false;
    switch (t.cmp) {
        case RuleCmp::Ge: return lhs >= rhs;
        case RuleCmp::Gt: return lhs > rhs;
        case RuleCmp::Le: return lhs <= rhs;
        case RuleCmp::Lt: return lhs < rhs;
        case RuleCmp::Eq: return lhs == rhs;
        case RuleCmp::Ne: return lhs != rhs;
        case RuleCmp::InRegion: return false;  // handled above
    }
    return false;
}

Detection make_detection(const Rule& r, const AccessSample& s) {
    Detection d;
    d.rule = r.name;
    d.action = r.action;
    d.patch_identifier = r.patch_identifier;
    d.message = r.message;
    d.pc = s.pc;
    d.violating_address = s.addr;
    d.is_write = s.is_write;
    d.cycle = s.cycle;
    d.cycle_step = s.cycle_step;
    return d;
}

}  // namespace

std::optional<Detection> evaluate(const std::vector<Rule>& rules, const AccessSample& sample,
                                  const MemoryImage& image, const EvalContext& ctx) {
    // The address table is initialized once, during the first scan cycle;
    // stores to it only become suspicious afterwards.
    if (sample.is_write && sample.cycle == 0) {
        auto k = image.try_classify(sample.addr);
        if (k && *k == RegionKind::AddressTable) return std::nullopt;
    }
    bool immune = sample.is_write && ctx.immune_cells && ctx.immune_cells->count(sample.addr) > 0;

    for (const Rule& r : rules) {
        bool all = !r.terms.empty();
        for (const RuleTerm& t : r.terms) {
            if (!term_matches(t, sample, image, ctx)) {
                all = false;
                break;
            }
        }
        if (!all) continue;
        Detection d = make_detection(r, sample);
        if (r.action == RuleAction::Warn) {
            d.action = RuleAction::Warn;
            if (ctx.warn_sink) ctx.warn_sink->push_back(d);
            continue;
        }
        if (immune) {
            // first ALERT match on a patch-managed cell downgrades and ends
            // evaluation for this event
            d.action = RuleAction::Warn;
            if (ctx.warn_sink) ctx.warn_sink->push_back(d);
            return std::nullopt;
        }
        return d;
    }
    return std::nullopt;
}

}  // namespace plcpatch
