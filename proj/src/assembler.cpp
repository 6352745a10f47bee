#include "plcpatch/assembler.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <sstream>

namespace plcpatch {

uint32_t AsmFragment::label(const std::string& name) const {
    auto it = labels.find(name);
    if (it == labels.end()) throw std::runtime_error("unknown label: " + name);
    return it->second;
}

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string strip(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// Splits on commas that are not inside {} or [].
std::vector<std::string> split_operands(const std::string& s) {
    std::vector<std::string> out;
    int depth = 0;
    std::string cur;
    for (char c : s) {
        if (c == '{' || c == '[') depth++;
        if (c == '}' || c == ']') depth--;
        if (c == ',' && depth == 0) {
            out.push_back(strip(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    std::string last = strip(cur);
    if (!last.empty()) out.push_back(last);
    return out;
}

std::optional<uint8_t> parse_reg(const std::string& in) {
    std::string s = lower(strip(in));
    if (s == "sp") return REG_SP;
    if (s == "lr") return REG_LR;
    if (s == "pc") return REG_PC;
    if (s == "fp") return REG_FP;
    if (s.size() >= 2 && s[0] == 'r') {
        int v = 0;
        for (size_t i = 1; i < s.size(); ++i) {
            if (!std::isdigit((unsigned char)s[i])) return std::nullopt;
            v = v * 10 + (s[i] - '0');
        }
        if (v <= 15) return uint8_t(v);
    }
    return std::nullopt;
}

std::optional<Cond> cond_from_suffix(const std::string& s) {
    if (s == "eq") return Cond::Eq;
    if (s == "ne") return Cond::Ne;
    if (s == "hs") return Cond::Hs;
    if (s == "lo") return Cond::Lo;
    if (s == "ge") return Cond::Ge;
    if (s == "lt") return Cond::Lt;
    return std::nullopt;
}

bool is_number(const std::string& s) {
    if (s.empty()) return false;
    size_t i = (s[0] == '-') ? 1 : 0;
    if (i >= s.size()) return false;
    if (s.compare(i, 2, "0x") == 0 || s.compare(i, 2, "0X") == 0) return s.size() > i + 2;
    return std::all_of(s.begin() + long(i), s.end(),
                       [](unsigned char c) { return std::isdigit(c); });
}

int64_t parse_number(const std::string& s, int line) {
    try {
        size_t pos = 0;
        int64_t v = std::stoll(s, &pos, 0);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (...) {
        throw AsmError(line, "bad numeric literal: " + s);
    }
}

struct Stmt {
    int line = 0;
    enum Kind { Instr, Word, Zero, Pool } kind = Instr;
    std::string mnemonic;
    Cond cond = Cond::Al;
    std::vector<std::string> operands;
    std::string expr;      // .word payload
    uint32_t zero_len = 0;
    bool pooled_ldr = false;  // ldr rX, =expr
    std::vector<std::string> labels_here;  // labels anchored at this statement
};

bool plain_identifier(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '_' || c == '.';
    }) && !std::isdigit((unsigned char)s[0]);
}

}  // namespace

AsmFragment assemble(const std::string& source, uint32_t base,
                     const std::map<std::string, uint32_t>& externs) {
    if (base % 4 != 0) throw AsmError(0, "fragment base must be word-aligned");

    // ---- parse ----
    std::vector<Stmt> stmts;
    std::vector<std::string> eof_labels;
    std::vector<std::string> pending_labels;

    std::istringstream in(source);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        size_t sc = line.find(';');
        if (sc != std::string::npos) line = line.substr(0, sc);
        line = strip(line);

        // leading labels
        while (!line.empty()) {
            size_t colon = line.find(':');
            if (colon == std::string::npos) break;
            std::string head = strip(line.substr(0, colon));
            if (!plain_identifier(head)) break;
            pending_labels.push_back(head);
            line = strip(line.substr(colon + 1));
        }
        if (line.empty()) continue;

        Stmt st;
        st.line = line_no;
        st.labels_here = std::move(pending_labels);
        pending_labels.clear();

        if (line[0] == '.') {
            std::istringstream ls(line);
            std::string directive;
            ls >> directive;
            directive = lower(directive);
            std::string rest = strip(line.substr(directive.size()));
            if (directive == ".word") {
                st.kind = Stmt::Word;
                st.expr = rest;
            } else if (directive == ".zero") {
                st.kind = Stmt::Zero;
                int64_t n = parse_number(rest, line_no);
                if (n <= 0) throw AsmError(line_no, ".zero length must be positive");
                st.zero_len = uint32_t(n);
            } else if (directive == ".pool") {
                st.kind = Stmt::Pool;
            } else {
                throw AsmError(line_no, "unknown directive: " + directive);
            }
            stmts.push_back(std::move(st));
            continue;
        }

        std::istringstream ls(line);
        std::string mnem;
        ls >> mnem;
        std::string rest = mnem.size() < line.size() ? strip(line.substr(mnem.size())) : "";
        mnem = lower(mnem);

        static const char* bases[] = {"subs", "sub", "add", "cmp", "mov", "ldr",
                                      "ldm",  "str", "stm", "nop", "b"};
        std::string found;
        for (const char* b : bases) {
            size_t n = std::string(b).size();
            if (mnem.size() == n && mnem == b) {
                found = b;
                break;
            }
            if (mnem.size() == n + 2 && mnem.compare(0, n, b) == 0 &&
                cond_from_suffix(mnem.substr(n))) {
                found = b;
                st.cond = *cond_from_suffix(mnem.substr(n));
                break;
            }
        }
        if (found.empty()) throw AsmError(line_no, "unknown mnemonic: " + mnem);
        st.mnemonic = found;
        st.operands = split_operands(rest);
        if (found == "ldr" && st.operands.size() == 2 && !st.operands[1].empty() &&
            st.operands[1][0] == '=')
            st.pooled_ldr = true;
        stmts.push_back(std::move(st));
    }
    eof_labels = std::move(pending_labels);

    // ---- layout: assign offsets, expand pools ----
    std::map<std::string, uint32_t> labels;  // name -> absolute address
    auto note_label = [&](const std::string& name, uint32_t off, int line) {
        if (labels.count(name)) throw AsmError(line, "duplicate label: " + name);
        if (externs.count(name)) throw AsmError(line, "label shadows extern symbol: " + name);
        labels[name] = base + off;
    };

    std::vector<uint32_t> stmt_off(stmts.size(), 0);
    uint32_t off = 0;
    size_t pool_pending = 0;
    for (size_t i = 0; i < stmts.size(); ++i) {
        for (const auto& n : stmts[i].labels_here) note_label(n, off, stmts[i].line);
        stmt_off[i] = off;
        switch (stmts[i].kind) {
            case Stmt::Instr:
                off += 4;
                if (stmts[i].pooled_ldr) ++pool_pending;
                break;
            case Stmt::Word: off += 4; break;
            case Stmt::Zero: off += stmts[i].zero_len; break;
            case Stmt::Pool:
                off += uint32_t(pool_pending * 4);
                pool_pending = 0;
                break;
        }
    }
    uint32_t trailing_pool_off = off;
    off += uint32_t(pool_pending * 4);
    for (const auto& n : eof_labels) note_label(n, off, line_no);
    const uint32_t total = off;

    // ---- expressions ----
    auto resolve_symbol = [&](const std::string& name, int line) -> uint32_t {
        if (auto it = labels.find(name); it != labels.end()) return it->second;
        if (auto it = externs.find(name); it != externs.end()) return it->second;
        throw AsmError(line, "unresolved symbol: " + name);
    };
    auto eval_expr = [&](const std::string& expr, int line) -> uint32_t {
        std::string s = strip(expr);
        if (s.empty()) throw AsmError(line, "empty expression");
        int64_t acc = 0;
        int pending_sign = 1;
        size_t i = 0;
        bool want_term = true;
        while (i < s.size()) {
            char c = s[i];
            if (std::isspace((unsigned char)c)) {
                ++i;
                continue;
            }
            if (!want_term) {
                if (c == '+' || c == '-') {
                    pending_sign = (c == '+') ? 1 : -1;
                    want_term = true;
                    ++i;
                    continue;
                }
                throw AsmError(line, "malformed expression: " + expr);
            }
            bool neg = false;
            if (c == '-') {
                neg = true;
                ++i;
                while (i < s.size() && std::isspace((unsigned char)s[i])) ++i;
                if (i >= s.size()) throw AsmError(line, "malformed expression: " + expr);
                c = s[i];
            }
            size_t j = i;
            if (s[j] == '@') ++j;
            while (j < s.size() && (std::isalnum((unsigned char)s[j]) || s[j] == '_' || s[j] == '.'))
                ++j;
            std::string term = s.substr(i, j - i);
            if (term.empty()) throw AsmError(line, "malformed expression: " + expr);
            int64_t v;
            if (term[0] == '@') v = resolve_symbol(term.substr(1), line);
            else if (is_number(term)) v = parse_number(term, line);
            else v = resolve_symbol(term, line);
            acc += pending_sign * (neg ? -v : v);
            pending_sign = 1;
            want_term = false;
            i = j;
        }
        if (want_term) throw AsmError(line, "malformed expression: " + expr);
        return uint32_t(acc);
    };

    // ---- encode ----
    std::vector<uint8_t> bytes(total, 0);
    auto put_word = [&](uint32_t at, uint32_t w) {
        bytes[at] = w & 0xFF;
        bytes[at + 1] = (w >> 8) & 0xFF;
        bytes[at + 2] = (w >> 16) & 0xFF;
        bytes[at + 3] = (w >> 24) & 0xFF;
    };

    struct PoolSlot {
        uint32_t ldr_off;
        uint32_t value;
        uint8_t rd;
        Cond cond;
        int line;
    };
    std::vector<PoolSlot> pool;
    auto flush_pool = [&](uint32_t pool_off) {
        for (auto& slot : pool) {
            put_word(pool_off, slot.value);
            int64_t delta = int64_t(base + pool_off) - int64_t(base + slot.ldr_off + 8);
            if (delta < 0 || delta > 0xFFF)
                throw AsmError(slot.line, "literal pool out of ldr range");
            put_word(slot.ldr_off, encode(ldr_lit(slot.rd, uint32_t(delta), slot.cond)));
            pool_off += 4;
        }
        pool.clear();
    };

    auto parse_mem = [&](const std::string& op, int line) -> std::pair<uint8_t, uint32_t> {
        std::string s = strip(op);
        if (s.size() < 2 || s.front() != '[' || s.back() != ']')
            throw AsmError(line, "expected [reg] or [reg, #imm]: " + op);
        auto parts = split_operands(s.substr(1, s.size() - 2));
        if (parts.empty() || parts.size() > 2) throw AsmError(line, "bad memory operand: " + op);
        auto rn = parse_reg(parts[0]);
        if (!rn) throw AsmError(line, "bad base register: " + parts[0]);
        uint32_t imm = 0;
        if (parts.size() == 2) {
            std::string immstr = strip(parts[1]);
            if (!immstr.empty() && immstr[0] == '#') immstr = immstr.substr(1);
            imm = eval_expr(immstr, line);
        }
        return {*rn, imm};
    };
    auto parse_list = [&](const std::string& op, int line) -> uint16_t {
        std::string s = strip(op);
        if (s.size() < 2 || s.front() != '{' || s.back() != '}')
            throw AsmError(line, "expected {reglist}: " + op);
        uint16_t list = 0;
        for (const auto& p : split_operands(s.substr(1, s.size() - 2))) {
            auto r = parse_reg(p);
            if (!r) throw AsmError(line, "bad register in list: " + p);
            list |= uint16_t(1u << *r);
        }
        return list;
    };
    auto operand2 = [&](const std::string& op, int line, bool& is_imm, uint32_t& imm, uint8_t& rm) {
        std::string s = strip(op);
        if (!s.empty() && s[0] == '#') {
            is_imm = true;
            imm = eval_expr(s.substr(1), line);
            return;
        }
        if (auto r = parse_reg(s)) {
            is_imm = false;
            rm = *r;
            return;
        }
        is_imm = true;
        imm = eval_expr(s, line);
    };

    for (size_t i = 0; i < stmts.size(); ++i) {
        const Stmt& st = stmts[i];
        uint32_t at = stmt_off[i];
        try {
            if (st.kind == Stmt::Word) {
                put_word(at, eval_expr(st.expr, st.line));
                continue;
            }
            if (st.kind == Stmt::Zero) continue;
            if (st.kind == Stmt::Pool) {
                flush_pool(at);
                continue;
            }

            const auto& ops = st.operands;
            const std::string& m = st.mnemonic;
            auto need = [&](size_t n) {
                if (ops.size() != n)
                    throw AsmError(st.line, m + ": expected " + std::to_string(n) + " operands");
            };
            if (m == "nop") {
                need(0);
                if (st.cond != Cond::Al) throw AsmError(st.line, "nop takes no condition");
                put_word(at, encode(nop()));
            } else if (m == "b") {
                need(1);
                uint32_t target = eval_expr(ops[0], st.line);
                int64_t delta = int64_t(target) - int64_t(base + at) - 8;
                if (delta % 4 != 0) throw AsmError(st.line, "branch target not word-aligned");
                put_word(at, encode(branch(int32_t(delta / 4), st.cond)));
            } else if (m == "mov") {
                need(2);
                auto rd = parse_reg(ops[0]);
                if (!rd) throw AsmError(st.line, "bad destination: " + ops[0]);
                bool is_imm;
                uint32_t imm = 0;
                uint8_t rm = 0;
                operand2(ops[1], st.line, is_imm, imm, rm);
                if (*rd == REG_PC) {
                    if (is_imm) throw AsmError(st.line, "mov pc, #imm not supported");
                    put_word(at, encode(mov_pc_reg(rm, st.cond)));
                } else if (is_imm) {
                    put_word(at, encode(mov_imm(*rd, imm, st.cond)));
                } else {
                    put_word(at, encode(mov_reg(*rd, rm, st.cond)));
                }
            } else if (m == "add" || m == "sub" || m == "subs") {
                need(3);
                auto rd = parse_reg(ops[0]);
                auto rn = parse_reg(ops[1]);
                if (!rd || !rn) throw AsmError(st.line, "bad register operands");
                bool is_imm;
                uint32_t imm = 0;
                uint8_t rm = 0;
                operand2(ops[2], st.line, is_imm, imm, rm);
                Instruction instr;
                if (m == "add")
                    instr = is_imm ? add_imm(*rd, *rn, imm, st.cond) : add_reg(*rd, *rn, rm, st.cond);
                else if (m == "sub")
                    instr = is_imm ? sub_imm(*rd, *rn, imm, st.cond) : sub_reg(*rd, *rn, rm, st.cond);
                else
                    instr = is_imm ? subs_imm(*rd, *rn, imm, st.cond) : subs_reg(*rd, *rn, rm, st.cond);
                put_word(at, encode(instr));
            } else if (m == "cmp") {
                need(2);
                auto rn = parse_reg(ops[0]);
                if (!rn) throw AsmError(st.line, "bad register: " + ops[0]);
                bool is_imm;
                uint32_t imm = 0;
                uint8_t rm = 0;
                operand2(ops[1], st.line, is_imm, imm, rm);
                put_word(at, encode(is_imm ? cmp_imm(*rn, imm, st.cond) : cmp_reg(*rn, rm, st.cond)));
            } else if (m == "ldr" || m == "str") {
                need(2);
                auto rd = parse_reg(ops[0]);
                if (!rd) throw AsmError(st.line, "bad register: " + ops[0]);
                std::string src = strip(ops[1]);
                if (m == "ldr" && st.pooled_ldr) {
                    pool.push_back({at, eval_expr(src.substr(1), st.line), *rd, st.cond, st.line});
                } else {
                    auto [rn, imm] = parse_mem(src, st.line);
                    if (m == "ldr")
                        put_word(at, encode(rn == REG_PC ? ldr_lit(*rd, imm, st.cond)
                                                         : ldr_imm(*rd, rn, imm, st.cond)));
                    else
                        put_word(at, encode(str_imm(*rd, rn, imm, st.cond)));
                }
            } else {  // ldm / stm
                need(2);
                std::string rn_str = strip(ops[0]);
                bool wb = !rn_str.empty() && rn_str.back() == '!';
                if (wb) rn_str = strip(rn_str.substr(0, rn_str.size() - 1));
                auto rn = parse_reg(rn_str);
                if (!rn) throw AsmError(st.line, "bad base register: " + ops[0]);
                uint16_t list = parse_list(ops[1], st.line);
                put_word(at, encode(m == "ldm" ? ldm(*rn, list, wb, st.cond)
                                               : stm(*rn, list, wb, st.cond)));
            }
        } catch (const EncodeError& e) {
            throw AsmError(st.line, e.what());
        }
    }
    flush_pool(trailing_pool_off);

    AsmFragment frag;
    frag.base = base;
    frag.bytes = std::move(bytes);
    frag.labels = std::move(labels);
    return frag;
}

std::string disassemble_range(const MemoryImage& img, uint32_t base, uint32_t len) {
    std::ostringstream os;
    for (uint32_t off = 0; off + 4 <= len; off += 4) {
        uint32_t w = img.read32(base + off);
        auto d = decode(w);
        if (d && d->op == Op::B) {
            uint32_t target = base + off + 8 + uint32_t(d->branch_off) * 4;
            std::string text = disassemble(*d);
            // rewrite the relative rendering into an absolute target
            size_t sp = text.find(' ');
            os << text.substr(0, sp) << " 0x" << std::hex << target << std::dec << "\n";
        } else if (d) {
            os << disassemble(*d) << "\n";
        } else {
            os << ".word 0x" << std::hex << w << std::dec << "\n";
        }
    }
    return os.str();
}

}  // namespace plcpatch
