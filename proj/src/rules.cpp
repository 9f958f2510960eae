#include "dendrite/rules.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "dendrite/graph.hpp"

namespace dendrite {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

char fold(char c) {
    return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

std::string lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(), fold);
    return out;
}

bool is_number(const std::string& s) {
    if (s.empty())
        return false;
    return std::all_of(s.begin(), s.end(),
                       [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

[[noreturn]] void syntax(int line, int col, const std::string& what) {
    throw RuleSyntaxError(line, col, what);
}

}  // namespace

bool PortSpec::matches(uint16_t port) const {
    switch (kind) {
    case Kind::Any:
        return true;
    case Kind::Single:
        return port == lo;
    case Kind::Range:
        return port >= lo && port <= hi;
    }
    return false;
}

const Signature* RuleSet::find(int sid) const {
    auto it = by_sid.find(sid);
    if (it == by_sid.end())
        return nullptr;
    return &signatures[it->second];
}

std::string normalize_reference(const std::string& ref) {
    std::string out;
    for (char c : ref) {
        if (c == ' ' || c == '\t')
            continue;
        out.push_back(c == ',' ? '-' : fold(c));
    }
    return out;
}

// --- header parsing -----------------------------------------------------------

namespace {

NetSpec parse_net_spec(const std::string& tok, int line, int col) {
    NetSpec spec;
    std::string t = tok;
    if (!t.empty() && t[0] == '!') {
        spec.negate = true;
        t = t.substr(1);
    }
    if (t.empty())
        syntax(line, col, "empty network spec");
    if (lower(t) == "any") {
        spec.kind = NetSpec::Kind::Any;
        return spec;
    }
    if (t[0] == '$') {
        spec.kind = NetSpec::Kind::Var;
        spec.var = t.substr(1);
        if (spec.var.empty())
            syntax(line, col, "empty variable reference");
        return spec;
    }
    spec.kind = NetSpec::Kind::Blocks;
    std::string list = t;
    if (t.front() == '[') {
        if (t.back() != ']')
            syntax(line, col, "unterminated network list: " + tok);
        list = t.substr(1, t.size() - 2);
    }
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty())
            continue;
        auto block = parse_cidr(item);
        if (!block)
            syntax(line, col, "bad network block: " + item);
        spec.blocks.push_back(*block);
    }
    if (spec.blocks.empty())
        syntax(line, col, "empty network list: " + tok);
    return spec;
}

PortSpec parse_port_spec(const std::string& tok, int line, int col) {
    PortSpec spec;
    if (lower(tok) == "any")
        return spec;
    auto colon = tok.find(':');
    auto to_port = [&](const std::string& s) -> uint16_t {
        if (!is_number(s))
            syntax(line, col, "bad port: " + tok);
        long v = std::stol(s);
        if (v < 0 || v > 65535)
            syntax(line, col, "port out of range: " + tok);
        return static_cast<uint16_t>(v);
    };
    if (colon == std::string::npos) {
        spec.kind = PortSpec::Kind::Single;
        spec.lo = to_port(tok);
        return spec;
    }
    spec.kind = PortSpec::Kind::Range;
    std::string lo = tok.substr(0, colon), hi = tok.substr(colon + 1);
    spec.lo = lo.empty() ? 0 : to_port(lo);
    spec.hi = hi.empty() ? 65535 : to_port(hi);
    if (spec.lo > spec.hi)
        syntax(line, col, "inverted port range: " + tok);
    return spec;
}

// Reads a quoted value. When hex_escapes is set, |..| sections switch to
// hexadecimal byte notation (the content syntax); backslash escapes the next
// character either way.
std::vector<uint8_t> parse_quoted(const std::string& value, bool hex_escapes, int line,
                                  int col) {
    std::string v = trim(value);
    if (v.size() < 2 || v.front() != '"' || v.back() != '"')
        syntax(line, col, "expected quoted value: " + value);
    std::vector<uint8_t> out;
    bool in_hex = false;
    std::string hexbuf;
    for (size_t i = 1; i + 1 < v.size(); ++i) {
        char c = v[i];
        if (in_hex) {
            if (c == '|') {
                if (hexbuf.size() % 2 != 0)
                    syntax(line, col, "odd hex digit count in content");
                for (size_t j = 0; j < hexbuf.size(); j += 2)
                    out.push_back(static_cast<uint8_t>(std::stoi(hexbuf.substr(j, 2), nullptr, 16)));
                hexbuf.clear();
                in_hex = false;
            } else if (std::isxdigit(static_cast<unsigned char>(c))) {
                hexbuf.push_back(c);
            } else if (c != ' ' && c != '\t') {
                syntax(line, col, std::string("bad hex digit '") + c + "' in content");
            }
            continue;
        }
        if (c == '\\') {
            if (i + 2 >= v.size())
                syntax(line, col, "dangling escape in quoted value");
            out.push_back(static_cast<uint8_t>(v[++i]));
            continue;
        }
        if (c == '|' && hex_escapes) {
            in_hex = true;
            continue;
        }
        out.push_back(static_cast<uint8_t>(c));
    }
    if (in_hex)
        syntax(line, col, "unterminated hex section in content");
    return out;
}

FlagsParams parse_flags_value(const std::string& value, int line, int col) {
    FlagsParams fp;
    std::string v = trim(value);
    std::string mask;
    auto comma = v.find(',');
    if (comma != std::string::npos) {
        mask = trim(v.substr(comma + 1));
        v = trim(v.substr(0, comma));
    }
    if (v.empty())
        syntax(line, col, "empty flags value");
    // Modifier may lead (snort style) or trail.
    auto take_mode = [&](char c) -> bool {
        switch (c) {
        case '!':
            fp.mode = FlagsParams::Mode::NotExact;
            return true;
        case '+':
            fp.mode = FlagsParams::Mode::AllSet;
            return true;
        case '*':
            fp.mode = FlagsParams::Mode::AnySet;
            return true;
        default:
            return false;
        }
    };
    if (take_mode(v.front()))
        v = v.substr(1);
    else if (v.size() > 1 && take_mode(v.back()))
        v = v.substr(0, v.size() - 1);
    auto letter_bit = [&](char c) -> uint8_t {
        switch (std::toupper(static_cast<unsigned char>(c))) {
        case 'F':
            return 0x01;
        case 'S':
            return 0x02;
        case 'R':
            return 0x04;
        case 'P':
            return 0x08;
        case 'A':
            return 0x10;
        case 'U':
            return 0x20;
        case 'E':
        case '1':
            return 0x40;
        case 'C':
        case '2':
            return 0x80;
        default:
            syntax(line, col, std::string("bad flag letter '") + c + "'");
        }
    };
    for (char c : v)
        fp.bits |= letter_bit(c);
    for (char c : mask)
        fp.ignore_mask |= letter_bit(c);
    if (fp.bits == 0)
        syntax(line, col, "empty flags value");
    return fp;
}

DsizeParams parse_dsize_value(const std::string& value, int line, int col) {
    DsizeParams dp;
    std::string v = trim(value);
    auto between = v.find("<>");
    if (between != std::string::npos) {
        std::string lo = trim(v.substr(0, between)), hi = trim(v.substr(between + 2));
        if (!is_number(lo) || !is_number(hi))
            syntax(line, col, "bad dsize range: " + value);
        dp.op = DsizeParams::Op::Between;
        dp.lo = std::stoi(lo);
        dp.hi = std::stoi(hi);
        if (dp.lo >= dp.hi)
            syntax(line, col, "inverted dsize range: " + value);
        return dp;
    }
    if (!v.empty() && v[0] == '>') {
        dp.op = DsizeParams::Op::Gt;
        v = trim(v.substr(1));
    } else if (!v.empty() && v[0] == '<') {
        dp.op = DsizeParams::Op::Lt;
        v = trim(v.substr(1));
    }
    if (!is_number(v))
        syntax(line, col, "bad dsize value: " + value);
    dp.lo = std::stoi(v);
    return dp;
}

// Splits the option region on ';', honouring quotes and escapes. Each option
// carries the 1-based column of its first character (base_col = column of the
// body's first character within the rule line).
std::vector<std::pair<std::string, int>> split_options(const std::string& body, int base_col,
                                                       int line) {
    std::vector<std::pair<std::string, int>> out;
    std::string cur;
    int start_col = 0;
    bool in_quote = false;
    for (size_t i = 0; i < body.size(); ++i) {
        char c = body[i];
        if (trim(cur).empty() && c != ' ' && c != '\t' && c != ';')
            start_col = base_col + static_cast<int>(i);
        if (c == '\\' && in_quote && i + 1 < body.size()) {
            cur.push_back(c);
            cur.push_back(body[++i]);
            continue;
        }
        if (c == '"')
            in_quote = !in_quote;
        if (c == ';' && !in_quote) {
            out.emplace_back(trim(cur), start_col);
            cur.clear();
            continue;
        }
        cur.push_back(c);
    }
    if (in_quote)
        syntax(line, base_col, "unterminated quote in options");
    if (!trim(cur).empty())
        out.emplace_back(trim(cur), start_col);
    return out;
}

}  // namespace

Signature parse_rule(const std::string& line, int line_no) {
    Signature sig;

    auto open = line.find('(');
    auto close = line.rfind(')');
    if (open == std::string::npos || close == std::string::npos || close < open)
        syntax(line_no, 1, "missing option block");

    // Header: action proto srcnet srcport -> dstnet dstport. Column of a
    // token = 1-based position of its first character.
    std::vector<std::pair<std::string, int>> header;
    for (size_t i = 0; i < open;) {
        if (line[i] == ' ' || line[i] == '\t') {
            ++i;
            continue;
        }
        size_t j = i;
        while (j < open && line[j] != ' ' && line[j] != '\t')
            ++j;
        header.emplace_back(line.substr(i, j - i), static_cast<int>(i) + 1);
        i = j;
    }
    if (header.size() < 7)
        syntax(line_no, 1, "incomplete rule header");
    if (header.size() > 7)
        syntax(line_no, header[7].second, "trailing header token: " + header[7].first);
    const auto& [action, action_col] = header[0];
    const auto& [proto, proto_col] = header[1];
    const auto& [src, src_col] = header[2];
    const auto& [srcport, srcport_col] = header[3];
    const auto& [arrow, arrow_col] = header[4];
    const auto& [dst, dst_col] = header[5];
    const auto& [dstport, dstport_col] = header[6];
    if (lower(action) != "alert")
        syntax(line_no, action_col, "unsupported action: " + action);
    if (arrow != "->")
        syntax(line_no, arrow_col, "expected '->', got: " + arrow);

    std::string p = lower(proto);
    if (p == "tcp")
        sig.proto = 6;
    else if (p == "udp")
        sig.proto = 17;
    else if (p == "icmp")
        sig.proto = 1;
    else
        syntax(line_no, proto_col, "unsupported protocol: " + proto);

    sig.src_net = parse_net_spec(src, line_no, src_col);
    sig.dst_net = parse_net_spec(dst, line_no, dst_col);
    sig.src_port = parse_port_spec(srcport, line_no, srcport_col);
    sig.dst_port = parse_port_spec(dstport, line_no, dstport_col);
    if (sig.proto == 1 &&
        (sig.src_port.kind != PortSpec::Kind::Any || sig.dst_port.kind != PortSpec::Kind::Any))
        syntax(line_no,
               sig.src_port.kind != PortSpec::Kind::Any ? srcport_col : dstport_col,
               "icmp rules take no ports");

    // Header criteria; "any" contributes none.
    {
        Criterion c;
        c.kind = Criterion::Kind::Proto;
        c.proto = sig.proto;
        sig.criteria.push_back(c);
    }
    if (sig.src_net.kind != NetSpec::Kind::Any) {
        Criterion c;
        c.kind = Criterion::Kind::SrcNet;
        c.net = sig.src_net;
        sig.criteria.push_back(c);
    }
    if (sig.dst_net.kind != NetSpec::Kind::Any) {
        Criterion c;
        c.kind = Criterion::Kind::DstNet;
        c.net = sig.dst_net;
        sig.criteria.push_back(c);
    }
    if (sig.src_port.kind != PortSpec::Kind::Any) {
        Criterion c;
        c.kind = Criterion::Kind::SrcPort;
        c.port = sig.src_port;
        sig.criteria.push_back(c);
    }
    if (sig.dst_port.kind != PortSpec::Kind::Any) {
        Criterion c;
        c.kind = Criterion::Kind::DstPort;
        c.port = sig.dst_port;
        sig.criteria.push_back(c);
    }

    bool saw_sid = false;
    int last_content = -1;  // index into sig.criteria of the latest content
    for (const auto& [opt, opt_col] : split_options(line.substr(open + 1, close - open - 1),
                                                static_cast<int>(open) + 2, line_no)) {
        if (opt.empty())
            continue;
        std::string keyword = opt, value;
        auto colon = opt.find(':');
        if (colon != std::string::npos) {
            keyword = trim(opt.substr(0, colon));
            value = trim(opt.substr(colon + 1));
        }
        keyword = lower(keyword);

        if (keyword == "msg") {
            auto bytes = parse_quoted(value, false, line_no, opt_col);
            sig.msg.assign(bytes.begin(), bytes.end());
        } else if (keyword == "sid") {
            if (!is_number(value))
                syntax(line_no, opt_col, "bad sid: " + value);
            sig.sid = std::stoi(value);
            saw_sid = true;
        } else if (keyword == "reference") {
            if (value.empty())
                syntax(line_no, opt_col, "empty reference");
            sig.refs.push_back(normalize_reference(value));
        } else if (keyword == "flow") {
            Criterion c;
            c.kind = Criterion::Kind::Flow;
            c.flow.dst_port = sig.dst_port;
            std::stringstream fs(value);
            std::string kw;
            bool saw_any = false;
            while (std::getline(fs, kw, ',')) {
                kw = lower(trim(kw));
                if (kw.empty())
                    continue;
                saw_any = true;
                if (kw == "to_server" || kw == "from_client")
                    c.flow.to_server = true;
                else if (kw == "established")
                    c.flow.established = true;
                else
                    syntax(line_no, opt_col, "unsupported flow keyword: " + kw);
            }
            if (!saw_any)
                syntax(line_no, opt_col, "empty flow option");
            sig.criteria.push_back(c);
        } else if (keyword == "content") {
            Criterion c;
            c.kind = Criterion::Kind::Content;
            c.content.pattern = parse_quoted(value, true, line_no, opt_col);
            if (c.content.pattern.empty())
                syntax(line_no, opt_col, "empty content pattern");
            sig.criteria.push_back(c);
            last_content = static_cast<int>(sig.criteria.size()) - 1;
        } else if (keyword == "depth" || keyword == "offset") {
            if (last_content < 0)
                syntax(line_no, opt_col, keyword + " with no preceding content");
            if (!is_number(value))
                syntax(line_no, opt_col, "bad " + keyword + ": " + value);
            auto& cp = sig.criteria[static_cast<size_t>(last_content)].content;
            int n = std::stoi(value);
            if (keyword == "depth") {
                if (n < static_cast<int>(cp.pattern.size()))
                    syntax(line_no, opt_col, "depth shorter than content pattern");
                cp.depth = n;
            } else {
                cp.offset = n;
            }
        } else if (keyword == "nocase") {
            if (last_content < 0)
                syntax(line_no, opt_col, "nocase with no preceding content");
            sig.criteria[static_cast<size_t>(last_content)].content.nocase = true;
        } else if (keyword == "dsize") {
            Criterion c;
            c.kind = Criterion::Kind::Dsize;
            c.dsize = parse_dsize_value(value, line_no, opt_col);
            sig.criteria.push_back(c);
        } else if (keyword == "flags") {
            Criterion c;
            c.kind = Criterion::Kind::Flags;
            c.flags = parse_flags_value(value, line_no, opt_col);
            sig.criteria.push_back(c);
        } else {
            throw UnknownOptionError(keyword);
        }
    }
    if (!saw_sid)
        syntax(line_no, static_cast<int>(open) + 1, "missing sid");
    if (sig.sid <= 0)
        syntax(line_no, static_cast<int>(open) + 1, "sid must be positive");
    for (auto& c : sig.criteria)
        c.rule_proto = sig.proto;
    return sig;
}

namespace {

ResolvedNet resolve_var_value(const std::string& value, const NetVarTable& vars, int line,
                              int col) {
    ResolvedNet out;
    NetSpec spec = parse_net_spec(trim(value), line, col);
    out.negate = spec.negate;
    switch (spec.kind) {
    case NetSpec::Kind::Any:
        out.any = true;
        break;
    case NetSpec::Kind::Blocks:
        out.blocks = spec.blocks;
        break;
    case NetSpec::Kind::Var: {
        auto it = vars.find(spec.var);
        if (it == vars.end())
            syntax(line, col, "undefined variable: $" + spec.var);
        out.any = it->second.any;
        out.blocks = it->second.blocks;
        out.negate = spec.negate != it->second.negate;
        break;
    }
    }
    return out;
}

}  // namespace

RuleSet parse_rules(const std::string& text) {
    RuleSet rs;
    std::stringstream ss(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(ss, raw)) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#')
            continue;
        if (line.rfind("var ", 0) == 0 || line.rfind("var\t", 0) == 0) {
            std::stringstream vs(line);
            std::string kw, name, value;
            vs >> kw >> name;
            std::getline(vs, value);
            value = trim(value);
            if (name.empty() || value.empty())
                syntax(line_no, 1, "var needs a name and a value");
            int vcol = static_cast<int>(line.find(value)) + 1;
            rs.net_vars[name] = resolve_var_value(value, rs.net_vars, line_no, vcol);
            continue;
        }
        try {
            Signature sig = parse_rule(line, line_no);
            if (rs.by_sid.count(sig.sid))
                syntax(line_no, 1, "duplicate sid " + std::to_string(sig.sid));
            rs.by_sid[sig.sid] = rs.signatures.size();
            rs.signatures.push_back(std::move(sig));
        } catch (const UnknownOptionError& e) {
            ++rs.rejected;
            rs.warnings.push_back("line " + std::to_string(line_no) + ": " + e.what() +
                                  " (rule skipped)");
        }
    }
    return rs;
}

// --- serialization --------------------------------------------------------------

namespace {

std::string serialize_net(const NetSpec& spec) {
    std::string out = spec.negate ? "!" : "";
    switch (spec.kind) {
    case NetSpec::Kind::Any:
        return "any";
    case NetSpec::Kind::Var:
        return out + "$" + spec.var;
    case NetSpec::Kind::Blocks:
        if (spec.blocks.size() == 1)
            return out + format_cidr(spec.blocks[0]);
        out += "[";
        for (size_t i = 0; i < spec.blocks.size(); ++i) {
            if (i)
                out += ",";
            out += format_cidr(spec.blocks[i]);
        }
        return out + "]";
    }
    return "any";
}

std::string serialize_port(const PortSpec& spec) {
    switch (spec.kind) {
    case PortSpec::Kind::Any:
        return "any";
    case PortSpec::Kind::Single:
        return std::to_string(spec.lo);
    case PortSpec::Kind::Range: {
        std::string lo = spec.lo == 0 ? "" : std::to_string(spec.lo);
        std::string hi = spec.hi == 65535 ? "" : std::to_string(spec.hi);
        return lo + ":" + hi;
    }
    }
    return "any";
}

std::string serialize_bytes(const std::vector<uint8_t>& bytes) {
    std::string out = "\"";
    bool in_hex = false;
    auto printable = [](uint8_t b) {
        return b >= 0x20 && b < 0x7f && b != '"' && b != '\\' && b != '|' && b != ';';
    };
    char buf[4];
    for (uint8_t b : bytes) {
        if (printable(b)) {
            if (in_hex) {
                out += "|";
                in_hex = false;
            }
            out.push_back(static_cast<char>(b));
        } else {
            if (!in_hex) {
                out += "|";
                in_hex = true;
            } else {
                out += " ";
            }
            std::snprintf(buf, sizeof buf, "%02X", b);
            out += buf;
        }
    }
    if (in_hex)
        out += "|";
    return out + "\"";
}

std::string serialize_flags(const FlagsParams& fp) {
    std::string out;
    switch (fp.mode) {
    case FlagsParams::Mode::NotExact:
        out += "!";
        break;
    case FlagsParams::Mode::AllSet:
        out += "+";
        break;
    case FlagsParams::Mode::AnySet:
        out += "*";
        break;
    case FlagsParams::Mode::Exact:
        break;
    }
    const std::pair<uint8_t, char> letters[] = {{0x01, 'F'}, {0x02, 'S'}, {0x04, 'R'},
                                                {0x08, 'P'}, {0x10, 'A'}, {0x20, 'U'},
                                                {0x40, 'E'}, {0x80, 'C'}};
    for (auto [bit, ch] : letters)
        if (fp.bits & bit)
            out.push_back(ch);
    if (fp.ignore_mask) {
        out += ",";
        if (fp.ignore_mask & 0x40)
            out += "1";
        if (fp.ignore_mask & 0x80)
            out += "2";
    }
    return out;
}

}  // namespace

std::string serialize_rule(const Signature& sig) {
    std::string proto = sig.proto == 6 ? "tcp" : sig.proto == 17 ? "udp" : "icmp";
    std::string out = "alert " + proto + " " + serialize_net(sig.src_net) + " " +
                      serialize_port(sig.src_port) + " -> " + serialize_net(sig.dst_net) + " " +
                      serialize_port(sig.dst_port) + " (";
    std::string msg_escaped;
    for (char c : sig.msg) {
        if (c == '"' || c == '\\')
            msg_escaped.push_back('\\');
        msg_escaped.push_back(c);
    }
    out += "msg:\"" + msg_escaped + "\"; ";
    for (const auto& r : sig.refs) {
        auto dash = r.find('-');
        std::string scheme = dash == std::string::npos ? r : r.substr(0, dash);
        std::string id = dash == std::string::npos ? "" : r.substr(dash + 1);
        out += "reference:" + scheme + "," + id + "; ";
    }
    for (const auto& c : sig.criteria) {
        switch (c.kind) {
        case Criterion::Kind::Flow: {
            std::string kws;
            if (c.flow.to_server)
                kws += "to_server";
            if (c.flow.established)
                kws += (kws.empty() ? "" : ",") + std::string("established");
            out += "flow:" + kws + "; ";
            break;
        }
        case Criterion::Kind::Content:
            out += "content:" + serialize_bytes(c.content.pattern) + "; ";
            if (c.content.offset)
                out += "offset:" + std::to_string(*c.content.offset) + "; ";
            if (c.content.depth)
                out += "depth:" + std::to_string(*c.content.depth) + "; ";
            if (c.content.nocase)
                out += "nocase; ";
            break;
        case Criterion::Kind::Dsize: {
            out += "dsize:";
            switch (c.dsize.op) {
            case DsizeParams::Op::Eq:
                out += std::to_string(c.dsize.lo);
                break;
            case DsizeParams::Op::Lt:
                out += "<" + std::to_string(c.dsize.lo);
                break;
            case DsizeParams::Op::Gt:
                out += ">" + std::to_string(c.dsize.lo);
                break;
            case DsizeParams::Op::Between:
                out += std::to_string(c.dsize.lo) + "<>" + std::to_string(c.dsize.hi);
                break;
            }
            out += "; ";
            break;
        }
        case Criterion::Kind::Flags:
            out += "flags:" + serialize_flags(c.flags) + "; ";
            break;
        default:
            break;  // header criteria are serialized in the header
        }
    }
    out += "sid:" + std::to_string(sig.sid) + ";)";
    return out;
}

// --- evaluation ------------------------------------------------------------------

namespace {

bool net_matches(const NetSpec& spec, Ipv4Addr addr, const NetVarTable& vars) {
    bool negate = spec.negate;
    bool member = false;
    switch (spec.kind) {
    case NetSpec::Kind::Any:
        member = true;
        break;
    case NetSpec::Kind::Blocks:
        member = std::any_of(spec.blocks.begin(), spec.blocks.end(),
                             [&](const CidrBlock& b) { return b.contains(addr); });
        break;
    case NetSpec::Kind::Var: {
        auto it = vars.find(spec.var);
        if (it == vars.end())
            return false;  // undefined variable never matches
        const ResolvedNet& rn = it->second;
        member = rn.any || std::any_of(rn.blocks.begin(), rn.blocks.end(),
                                       [&](const CidrBlock& b) { return b.contains(addr); });
        negate = spec.negate != rn.negate;
        break;
    }
    }
    return negate ? !member : member;
}

// Transport features live under the rule's protocol.
Feature srcport_feature(uint8_t proto) {
    return proto == 17 ? Feature::UdpSrcPort : Feature::TcpSrcPort;
}
Feature dstport_feature(uint8_t proto) {
    return proto == 17 ? Feature::UdpDstPort : Feature::TcpDstPort;
}
Feature payload_feature(uint8_t proto) {
    return proto == 17 ? Feature::UdpPayload : Feature::TcpPayload;
}

bool content_matches(const ContentParams& cp, const std::vector<uint8_t>& payload) {
    size_t start = cp.offset ? static_cast<size_t>(*cp.offset) : 0;
    if (start > payload.size())
        return false;
    size_t end = payload.size();
    if (cp.depth)
        end = std::min(end, start + static_cast<size_t>(*cp.depth));
    if (cp.pattern.empty() || end - start < cp.pattern.size())
        return false;
    auto eq = [&](uint8_t a, uint8_t b) {
        if (!cp.nocase)
            return a == b;
        return std::tolower(a) == std::tolower(b);
    };
    auto it = std::search(payload.begin() + static_cast<long>(start),
                          payload.begin() + static_cast<long>(end), cp.pattern.begin(),
                          cp.pattern.end(), eq);
    return it != payload.begin() + static_cast<long>(end);
}

}  // namespace

bool eval_criterion(const Criterion& c, const Antigen& a, const NetVarTable& vars) {
    // Helper: integer feature or "absent".
    auto get_int = [&](Feature f) -> std::optional<uint64_t> {
        const FeatureValue& v = antigen_get(a, f);
        if (v.kind != FeatureValue::Kind::Int)
            return std::nullopt;
        return v.num;
    };

    switch (c.kind) {
    case Criterion::Kind::Proto: {
        auto proto = get_int(Feature::IpProto);
        return proto && *proto == c.proto;
    }
    case Criterion::Kind::SrcNet: {
        auto ip = get_int(Feature::IpSrc);
        return ip && net_matches(c.net, Ipv4Addr{static_cast<uint32_t>(*ip)}, vars);
    }
    case Criterion::Kind::DstNet: {
        auto ip = get_int(Feature::IpDst);
        return ip && net_matches(c.net, Ipv4Addr{static_cast<uint32_t>(*ip)}, vars);
    }
    case Criterion::Kind::SrcPort: {
        auto port = get_int(srcport_feature(c.rule_proto));
        return port && c.port.matches(static_cast<uint16_t>(*port));
    }
    case Criterion::Kind::DstPort: {
        auto port = get_int(dstport_feature(c.rule_proto));
        return port && c.port.matches(static_cast<uint16_t>(*port));
    }
    case Criterion::Kind::Flow: {
        auto flags = get_int(Feature::TcpFlags);
        if (!flags || (*flags & 0x10) == 0)  // established: ACK must be set
            return false;
        if (c.flow.to_server && c.flow.dst_port.kind != PortSpec::Kind::Any) {
            auto port = get_int(Feature::TcpDstPort);
            if (!port || !c.flow.dst_port.matches(static_cast<uint16_t>(*port)))
                return false;
        }
        return true;
    }
    case Criterion::Kind::Content: {
        const FeatureValue& v = antigen_get(a, payload_feature(c.rule_proto));
        if (v.kind != FeatureValue::Kind::Bytes)
            return false;
        return content_matches(c.content, v.bytes);
    }
    case Criterion::Kind::Dsize: {
        const FeatureValue& v = antigen_get(a, payload_feature(c.rule_proto));
        if (v.kind != FeatureValue::Kind::Bytes)
            return false;
        int n = static_cast<int>(v.bytes.size());
        switch (c.dsize.op) {
        case DsizeParams::Op::Eq:
            return n == c.dsize.lo;
        case DsizeParams::Op::Lt:
            return n < c.dsize.lo;
        case DsizeParams::Op::Gt:
            return n > c.dsize.lo;
        case DsizeParams::Op::Between:
            return n > c.dsize.lo && n < c.dsize.hi;
        }
        return false;
    }
    case Criterion::Kind::Flags: {
        auto flags = get_int(Feature::TcpFlags);
        if (!flags)
            return false;
        uint8_t f = static_cast<uint8_t>(*flags);
        switch (c.flags.mode) {
        case FlagsParams::Mode::Exact:
            return (f & ~c.flags.ignore_mask) == c.flags.bits;
        case FlagsParams::Mode::NotExact:
            return (f & ~c.flags.ignore_mask) != c.flags.bits;
        case FlagsParams::Mode::AllSet:
            return (f & c.flags.bits) == c.flags.bits;
        case FlagsParams::Mode::AnySet:
            return (f & c.flags.bits) != 0;
        }
        return false;
    }
    }
    return false;
}

int match_count(const Signature& s, const Antigen& a, const NetVarTable& vars) {
    int n = 0;
    for (const auto& c : s.criteria)
        if (eval_criterion(c, a, vars))
            ++n;
    return n;
}

bool match_full(const Signature& s, const Antigen& a, const NetVarTable& vars) {
    if (s.criteria.empty())
        return false;
    return match_count(s, a, vars) == static_cast<int>(s.criteria.size());
}

double partial_score(const Signature& s, const Antigen& a, const NetVarTable& vars) {
    if (s.criteria.empty())
        return 0.0;
    return static_cast<double>(match_count(s, a, vars)) / static_cast<double>(s.criteria.size());
}

// --- exploit mapping --------------------------------------------------------------

ExploitMap build_exploit_map(const RuleSet& rs, const GraphDef& def) {
    ExploitMap m;
    for (const auto& sig : rs.signatures) {
        auto pin = def.sig_pins.find(sig.sid);
        if (pin != def.sig_pins.end()) {
            m.sig_to_exploit[sig.sid] = pin->second;
            m.exploit_to_sigs[pin->second].insert(sig.sid);
            continue;
        }
        std::vector<const ExploitDef*> hits;
        for (const auto& e : def.exploits) {
            bool overlap = std::any_of(sig.refs.begin(), sig.refs.end(), [&](const std::string& r) {
                return std::find(e.refs.begin(), e.refs.end(), r) != e.refs.end();
            });
            if (overlap)
                hits.push_back(&e);
        }
        if (hits.size() > 1)
            throw AmbiguousMappingError("sid " + std::to_string(sig.sid) +
                                        " references more than one exploit (" + hits[0]->id +
                                        ", " + hits[1]->id + ")");
        if (hits.size() == 1) {
            m.sig_to_exploit[sig.sid] = hits[0]->id;
            m.exploit_to_sigs[hits[0]->id].insert(sig.sid);
        }
    }
    return m;
}

}  // namespace dendrite
