#include "plcpatch/snapshot.hpp"

#include <fstream>
#include <sstream>

namespace plcpatch {

namespace fs = std::filesystem;

std::string to_hex(const std::vector<uint8_t>& bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (uint8_t b : bytes) {
        out += digits[b >> 4];
        out += digits[b & 0xF];
    }
    return out;
}

std::vector<uint8_t> from_hex(const std::string& hex) {
    if (hex.size() % 2 != 0) throw ManifestParseError("hex string with odd length");
    auto nib = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw ManifestParseError("bad hex digit");
    };
    std::vector<uint8_t> out(hex.size() / 2);
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = uint8_t(nib(hex[2 * i]) << 4 | nib(hex[2 * i + 1]));
    return out;
}

namespace {

std::string strip(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

uint64_t parse_u64(const std::string& s, const std::string& what) {
    try {
        size_t pos = 0;
        uint64_t v = std::stoull(s, &pos, 0);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (...) {
        throw ManifestParseError("bad value for " + what + ": " + s);
    }
}

// region lines: region NAME base=0x... len=0x... file=path
struct RegionLine {
    RegionKind kind;
    uint32_t base;
    uint32_t len;
    std::string file;
};

RegionLine parse_region_line(const std::string& rest) {
    std::istringstream is(rest);
    std::string name;
    is >> name;
    auto kind = region_from_name(name);
    if (!kind) throw ManifestParseError("unknown region name: " + name);
    RegionLine rl{*kind, 0, 0, ""};
    bool saw_base = false, saw_len = false, saw_file = false;
    std::string tok;
    while (is >> tok) {
        size_t eq = tok.find('=');
        if (eq == std::string::npos) throw ManifestParseError("bad region attribute: " + tok);
        std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "base") {
            rl.base = uint32_t(parse_u64(val, "base"));
            saw_base = true;
        } else if (key == "len") {
            rl.len = uint32_t(parse_u64(val, "len"));
            saw_len = true;
        } else if (key == "file") {
            rl.file = val;
            saw_file = true;
        } else {
            throw ManifestParseError("unknown region attribute: " + key);
        }
    }
    if (!saw_base || !saw_len || !saw_file)
        throw ManifestParseError("region line needs base=, len= and file=");
    return rl;
}

std::vector<uint8_t> read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw SnapshotError("cannot open region file: " + p.string());
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

MemoryImage load_snapshot(const fs::path& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) throw ManifestParseError("cannot open manifest: " + manifest_path.string());
    fs::path dir = manifest_path.parent_path();

    MemoryImage img;
    bool saw_entry = false;
    std::string raw;
    int line_no = 0;
    while (std::getline(f, raw)) {
        ++line_no;
        std::string line = raw;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = strip(line);
        if (line.empty()) continue;

        if (line.rfind("region ", 0) == 0) {
            RegionLine rl = parse_region_line(line.substr(7));
            std::vector<uint8_t> data = read_file(dir / rl.file);
            if (data.size() != rl.len)
                throw ManifestParseError("region " + std::string(region_name(rl.kind)) +
                                         ": declared len 0x" + std::to_string(rl.len) +
                                         " does not match file size");
            Region r{rl.kind, rl.base, rl.len, std::move(data)};
            img.add_region(std::move(r));
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ManifestParseError("line " + std::to_string(line_no) + ": expected key=value");
        std::string key = strip(line.substr(0, eq));
        std::string val = strip(line.substr(eq + 1));
        if (key == "entry") {
            img.app_entry = uint32_t(parse_u64(val, key));
            saw_entry = true;
        } else if (key == "app_load_offset") {
            img.app_load_offset = uint32_t(parse_u64(val, key));
        } else if (key == "sp") {
            img.initial_sp = uint32_t(parse_u64(val, key));
        } else if (key == "lr") {
            img.initial_lr = uint32_t(parse_u64(val, key));
        } else if (key == "gate") {
            img.gate_addr = uint32_t(parse_u64(val, key));
        } else if (key == "cycles_done") {
            img.cycles_done = parse_u64(val, key);
        } else if (key == "mmio_input") {
            img.mmio_input = from_hex(val);
        } else if (key == "legit_input") {
            img.legit_input = from_hex(val);
        } else {
            throw ManifestParseError("unknown manifest key: " + key);
        }
    }
    if (!saw_entry) throw ManifestParseError("manifest lacks entry=");
    img.finalize();  // validates mandatory regions, ordering, installs mmio_input
    return img;
}

fs::path dump_snapshot(const MemoryImage& img, const fs::path& dir) {
    fs::create_directories(dir);
    std::ostringstream m;
    m << std::hex;
    for (const auto& r : img.regions()) {
        std::string fname = std::string(region_name(r.kind));
        for (auto& c : fname) c = char(std::tolower((unsigned char)c));
        fname += ".bin";
        std::ofstream rf(dir / fname, std::ios::binary);
        if (!rf) throw SnapshotError("cannot write region file: " + (dir / fname).string());
        rf.write(reinterpret_cast<const char*>(r.data.data()), std::streamsize(r.data.size()));
        m << "region " << region_name(r.kind) << " base=0x" << r.base << " len=0x" << r.length
          << " file=" << fname << "\n";
    }
    m << "entry=0x" << img.app_entry << "\n";
    m << "app_load_offset=0x" << img.app_load_offset << "\n";
    if (img.initial_sp) m << "sp=0x" << img.initial_sp << "\n";
    if (img.initial_lr) m << "lr=0x" << img.initial_lr << "\n";
    if (img.gate_addr) m << "gate=0x" << img.gate_addr << "\n";
    m << std::dec << "cycles_done=" << img.cycles_done << "\n" << std::hex;
    if (!img.mmio_input.empty()) m << "mmio_input=" << to_hex(img.mmio_input) << "\n";
    if (!img.legit_input.empty()) m << "legit_input=" << to_hex(img.legit_input) << "\n";

    fs::path mpath = dir / "snapshot.manifest";
    std::ofstream mf(mpath);
    if (!mf) throw SnapshotError("cannot write manifest: " + mpath.string());
    mf << m.str();
    return mpath;
}

}  // namespace plcpatch
