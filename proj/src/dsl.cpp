#include "pbm/dsl.hpp"

#include <algorithm>
#include <charconv>
#include <optional>

#include "pbm/error.hpp"

namespace pbm {
namespace {

constexpr std::int64_t kMaxKbps = 1'000'000'000;
constexpr std::int64_t kMaxInt = 1'000'000'000;

constexpr std::string_view kDayNames[7] = {"mon", "tue", "wed", "thu", "fri", "sat", "sun"};

struct Pos {
    std::size_t line = 1;
    std::size_t column = 1;
};

enum class Tok { Word, String, LBrace, RBrace, Comma, Equals, End };

struct Token {
    Tok kind = Tok::End;
    std::string text;  // word text or decoded string
    Pos pos;
};

std::string_view describe(const Token& t) {
    switch (t.kind) {
        case Tok::Word: return t.text;
        case Tok::String: return "string";
        case Tok::LBrace: return "'{'";
        case Tok::RBrace: return "'}'";
        case Tok::Comma: return "','";
        case Tok::Equals: return "'='";
        case Tok::End: return "end of input";
    }
    return "?";
}

/// Owns the source text for error reporting.
class Source {
public:
    explicit Source(std::string_view text) : text_(text) {
        line_starts_.push_back(0);
        for (std::size_t i = 0; i < text.size(); ++i) {
            if (text[i] == '\n') line_starts_.push_back(i + 1);
        }
    }

    std::string_view text() const { return text_; }

    Pos pos_of(std::size_t offset) const {
        auto it = std::upper_bound(line_starts_.begin(), line_starts_.end(), offset);
        std::size_t line = static_cast<std::size_t>(it - line_starts_.begin());
        return Pos{line, offset - line_starts_[line - 1] + 1};
    }

    std::string line_text(std::size_t line) const {
        std::size_t start = line_starts_[line - 1];
        std::size_t end = text_.find('\n', start);
        if (end == std::string_view::npos) end = text_.size();
        std::string_view s = text_.substr(start, end - start);
        if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
        return std::string(s);
    }

    [[noreturn]] void fail(Pos pos, const std::string& message) const {
        throw ParseError(pos.line, pos.column, message, line_text(pos.line));
    }

private:
    std::string_view text_;
    std::vector<std::size_t> line_starts_;
};

// Returns the length of the UTF-8 sequence at `i`, or 0 if it is invalid.
std::size_t utf8_length(std::string_view s, std::size_t i) {
    auto b = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
    unsigned char c = b(i);
    if (c < 0x80) return 1;
    std::size_t n = 0;
    std::uint32_t cp = 0;
    if ((c & 0xe0) == 0xc0) n = 2, cp = c & 0x1f;
    else if ((c & 0xf0) == 0xe0) n = 3, cp = c & 0x0f;
    else if ((c & 0xf8) == 0xf0) n = 4, cp = c & 0x07;
    else return 0;
    if (i + n > s.size()) return 0;
    for (std::size_t k = 1; k < n; ++k) {
        if ((b(i + k) & 0xc0) != 0x80) return 0;
        cp = cp << 6 | (b(i + k) & 0x3f);
    }
    if ((n == 2 && cp < 0x80) || (n == 3 && cp < 0x800) || (n == 4 && (cp < 0x10000 || cp > 0x10ffff))) return 0;
    if (cp >= 0xd800 && cp <= 0xdfff) return 0;
    return n;
}

bool is_word_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_' ||
           c == '.' || c == '/' || c == ':' || c == '+';
}

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

std::vector<Token> tokenize(const Source& src) {
    std::string_view s = src.text();
    for (std::size_t i = 0; i < s.size();) {
        std::size_t n = utf8_length(s, i);
        if (n == 0) src.fail(src.pos_of(i), "invalid UTF-8 byte");
        i += n;
    }

    std::vector<Token> out;
    std::size_t i = 0;
    while (i < s.size()) {
        char c = s[i];
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            ++i;
            continue;
        }
        if (c == '#') {
            while (i < s.size() && s[i] != '\n') ++i;
            continue;
        }
        Token tok;
        tok.pos = src.pos_of(i);
        switch (c) {
            case '{': tok.kind = Tok::LBrace; ++i; out.push_back(tok); continue;
            case '}': tok.kind = Tok::RBrace; ++i; out.push_back(tok); continue;
            case ',': tok.kind = Tok::Comma; ++i; out.push_back(tok); continue;
            case '=': tok.kind = Tok::Equals; ++i; out.push_back(tok); continue;
            default: break;
        }
        if (c == '"') {
            tok.kind = Tok::String;
            ++i;
            for (;;) {
                if (i >= s.size() || s[i] == '\n') src.fail(tok.pos, "unterminated string");
                char d = s[i];
                if (d == '"') {
                    ++i;
                    break;
                }
                if (static_cast<unsigned char>(d) < 0x20 && d != '\t') src.fail(src.pos_of(i), "control character in string");
                if (d != '\\') {
                    tok.text += d;
                    ++i;
                    continue;
                }
                if (i + 1 >= s.size()) src.fail(src.pos_of(i), "unterminated escape");
                char e = s[i + 1];
                switch (e) {
                    case '\\': tok.text += '\\'; break;
                    case '"': tok.text += '"'; break;
                    case 'n': tok.text += '\n'; break;
                    case 't': tok.text += '\t'; break;
                    case 'r': tok.text += '\r'; break;
                    case 'x': {
                        int hi = i + 2 < s.size() ? hex_value(s[i + 2]) : -1;
                        int lo = i + 3 < s.size() ? hex_value(s[i + 3]) : -1;
                        int v = hi * 16 + lo;
                        if (hi < 0 || lo < 0 || (v >= 0x20 && v != 0x7f)) {
                            src.fail(src.pos_of(i), "\\x escapes are limited to control characters");
                        }
                        tok.text += static_cast<char>(v);
                        i += 2;
                        break;
                    }
                    default: src.fail(src.pos_of(i), std::string("unknown escape \\") + e);
                }
                i += 2;
            }
            out.push_back(std::move(tok));
            continue;
        }
        if (is_word_char(c)) {
            tok.kind = Tok::Word;
            std::size_t start = i;
            while (i < s.size() && is_word_char(s[i])) ++i;
            tok.text = std::string(s.substr(start, i - start));
            out.push_back(std::move(tok));
            continue;
        }
        src.fail(tok.pos, std::string("unexpected character '") + std::string(s.substr(i, utf8_length(s, i))) + "'");
    }
    Token end;
    end.kind = Tok::End;
    end.pos = src.pos_of(s.size());
    out.push_back(end);
    return out;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
    if (s.empty() || s.size() > 12) return std::nullopt;
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || v < 0) return std::nullopt;
    return v;
}

std::optional<int> parse_clock(std::string_view s) {
    if (s.size() != 5 || s[2] != ':') return std::nullopt;
    auto hh = parse_int(s.substr(0, 2));
    auto mm = parse_int(s.substr(3, 2));
    if (!hh || !mm || *mm > 59 || *hh > 24 || (*hh == 24 && *mm != 0)) return std::nullopt;
    return static_cast<int>(*hh * 60 + *mm);
}

int day_index(std::string_view s) {
    for (int d = 0; d < 7; ++d) {
        if (kDayNames[d] == s) return d;
    }
    return -1;
}

struct BodyPositions {
    Pos source, destination, service, time, actions;
};

struct RuleBody {
    std::string subject;
    std::string target;
    Condition condition;
    ActionSet actions;
    BodyPositions pos;
};

class Parser {
public:
    explicit Parser(std::string_view text) : src_(text), toks_(tokenize(src_)) {}

    Document run() {
        while (peek().kind != Tok::End) top_level();
        resolve();
        std::sort(doc_.rules.begin(), doc_.rules.end(),
                  [](const PolicyRule& a, const PolicyRule& b) { return a.order < b.order; });
        if (auto v = validate_document(doc_); !v.empty()) src_.fail(Pos{1, 1}, v.front());
        return std::move(doc_);
    }

private:
    const Token& peek() const { return toks_[at_]; }
    const Token& next() { return toks_[at_ == toks_.size() - 1 ? at_ : at_++]; }

    [[noreturn]] void unexpected(const Token& t, std::string_view wanted) const {
        src_.fail(t.pos, "expected " + std::string(wanted) + ", found " + std::string(describe(t)));
    }

    bool accept_word(std::string_view w) {
        if (peek().kind == Tok::Word && peek().text == w) {
            ++at_;
            return true;
        }
        return false;
    }

    void expect_word(std::string_view w) {
        if (!accept_word(w)) unexpected(peek(), "'" + std::string(w) + "'");
    }

    void expect(Tok kind, std::string_view wanted) {
        if (peek().kind != kind) unexpected(peek(), wanted);
        ++at_;
    }

    const Token& identifier(std::string_view what) {
        const Token& t = peek();
        if (t.kind != Tok::Word || !is_identifier(t.text)) unexpected(t, what);
        return next();
    }

    // Bare identifier or quoted string.
    const Token& name(std::string_view what) {
        const Token& t = peek();
        if (t.kind == Tok::String || (t.kind == Tok::Word && is_identifier(t.text))) return next();
        unexpected(t, what);
    }

    const Token& definition_name(std::string_view what) {
        const Token& t = name(what);
        if (t.text.empty()) src_.fail(t.pos, std::string(what) + " must not be empty");
        if (t.text == kAny) src_.fail(t.pos, "'any' is reserved and cannot name a " + std::string(what));
        return t;
    }

    std::int64_t integer(std::string_view what, std::int64_t max = kMaxInt) {
        const Token& t = peek();
        auto v = t.kind == Tok::Word ? parse_int(t.text) : std::nullopt;
        if (!v) unexpected(t, what);
        if (*v > max) src_.fail(t.pos, std::string(what) + " out of range");
        ++at_;
        return *v;
    }

    void top_level() {
        const Token& kw = peek();
        if (kw.kind != Tok::Word) unexpected(kw, "a top-level keyword");
        if (kw.text == "meta") return meta();
        if (kw.text == "entity") return entity();
        if (kw.text == "service") return service();
        if (kw.text == "time") return time_class();
        if (kw.text == "goal") return goal();
        if (kw.text == "refine") return refine();
        if (kw.text == "bind") return bind();
        if (kw.text == "rule") return rule();
        src_.fail(kw.pos, "unknown top-level keyword '" + kw.text + "'");
    }

    void meta() {
        next();
        const Token& key = identifier("metadata key");
        const Token& value = peek();
        if (value.kind != Tok::String) unexpected(value, "quoted metadata value");
        next();
        if (!meta_keys_.insert(key.text).second) src_.fail(key.pos, "duplicate meta key " + key.text);
        if (key.text == "tz") {
            auto offset = parse_utc_offset(value.text);
            if (!offset) src_.fail(value.pos, "tz must be formatted as +HH:MM or -HH:MM");
            doc_.catalogs.utc_offset_minutes = *offset;
            return;
        }
        doc_.meta[key.text] = value.text;
    }

    void entity() {
        next();
        const Token& n = definition_name("entity name");
        EntityGroup group;
        group.name = n.text;
        if (peek().kind == Tok::Equals) {
            next();
            expect_word("any");
            group.any = true;
        } else {
            expect(Tok::LBrace, "'{' or '= any'");
            if (peek().kind == Tok::RBrace) src_.fail(n.pos, "entity " + n.text + " needs at least one member");
            for (;;) {
                const Token& m = peek();
                auto cidr = m.kind == Tok::Word ? Cidr::parse(m.text) : std::nullopt;
                if (!cidr) unexpected(m, "IPv4 address or CIDR block");
                next();
                group.members.insert(*cidr);
                if (peek().kind == Tok::Comma) {
                    next();
                    continue;
                }
                expect(Tok::RBrace, "',' or '}'");
                break;
            }
        }
        if (!doc_.catalogs.entities.emplace(group.name, group).second) src_.fail(n.pos, "duplicate entity " + n.text);
    }

    void service() {
        next();
        const Token& n = definition_name("service name");
        ServiceClass svc;
        svc.name = n.text;
        if (peek().kind == Tok::Equals) {
            next();
            expect_word("any");
            svc.any = true;
        } else {
            expect(Tok::LBrace, "'{' or '= any'");
            if (peek().kind == Tok::RBrace) src_.fail(n.pos, "service " + n.text + " needs at least one matcher");
            for (;;) {
                const Token& p = peek();
                auto proto = p.kind == Tok::Word ? parse_protocol(p.text) : std::nullopt;
                if (!proto) unexpected(p, "protocol (tcp, udp or any)");
                next();
                const Token& r = peek();
                if (r.kind != Tok::Word) unexpected(r, "port or port range");
                auto dash = r.text.find('-');
                auto lo = parse_int(std::string_view(r.text).substr(0, dash));
                auto hi = dash == std::string::npos ? lo : parse_int(std::string_view(r.text).substr(dash + 1));
                if (!lo || !hi) unexpected(r, "port or port range");
                if (*lo > 65535 || *hi > 65535) src_.fail(r.pos, "port out of range [0, 65535]");
                if (*lo > *hi) src_.fail(r.pos, "port range low exceeds high");
                next();
                svc.matchers.insert(PortMatcher{*proto, static_cast<std::uint16_t>(*lo), static_cast<std::uint16_t>(*hi)});
                if (peek().kind == Tok::Comma) {
                    next();
                    continue;
                }
                expect(Tok::RBrace, "',' or '}'");
                break;
            }
        }
        if (!doc_.catalogs.services.emplace(svc.name, svc).second) src_.fail(n.pos, "duplicate service " + n.text);
    }

    DaySet day_item(const Token& t) {
        auto dash = t.text.find('-');
        int a = day_index(std::string_view(t.text).substr(0, dash));
        int b = dash == std::string::npos ? a : day_index(std::string_view(t.text).substr(dash + 1));
        if (a < 0 || b < 0) unexpected(t, "day (mon..sun) or day range");
        if (a > b) src_.fail(t.pos, "day range must run forward from mon to sun");
        DaySet days = 0;
        for (int d = a; d <= b; ++d) days |= static_cast<DaySet>(1u << d);
        return days;
    }

    void time_class() {
        next();
        const Token& n = definition_name("time class name");
        TimeClass tc;
        tc.name = n.text;
        if (peek().kind == Tok::Equals) {
            next();
            expect_word("any");
            tc.any = true;
        } else {
            expect(Tok::LBrace, "'{' or '= any'");
            if (peek().kind == Tok::RBrace) src_.fail(n.pos, "time class " + n.text + " needs at least one window");
            for (;;) {
                TimeWindow w;
                w.days = 0;
                for (;;) {
                    const Token& d = peek();
                    if (d.kind != Tok::Word) unexpected(d, "day set");
                    w.days |= day_item(next());
                    if (peek().kind == Tok::Comma) {
                        next();
                        continue;
                    }
                    break;
                }
                const Token& r = peek();
                if (r.kind != Tok::Word) unexpected(r, "time range HH:MM-HH:MM");
                auto dash = r.text.find('-');
                auto start = dash == std::string::npos ? std::nullopt : parse_clock(std::string_view(r.text).substr(0, dash));
                auto end = dash == std::string::npos ? std::nullopt : parse_clock(std::string_view(r.text).substr(dash + 1));
                if (!start || !end) unexpected(r, "time range HH:MM-HH:MM");
                if (*start >= *end) src_.fail(r.pos, "time window must start before it ends");
                next();
                w.start_minute = *start;
                w.end_minute = *end;
                tc.windows.insert(w);
                if (peek().kind == Tok::Comma) {
                    next();
                    continue;
                }
                expect(Tok::RBrace, "',' or '}'");
                break;
            }
        }
        if (!doc_.catalogs.times.emplace(tc.name, tc).second) src_.fail(n.pos, "duplicate time class " + n.text);
    }

    void goal() {
        next();
        const Token& id = identifier("goal id");
        expect_word("level");
        Pos level_pos = peek().pos;
        auto level = integer("goal level");
        if (level < 1) src_.fail(level_pos, "goal level must be >= 1");
        const Token& desc = peek();
        if (desc.kind != Tok::String) unexpected(desc, "quoted goal description");
        next();
        if (!doc_.graph.goals.emplace(id.text, Goal{id.text, static_cast<int>(level), desc.text}).second) {
            src_.fail(id.pos, "duplicate goal " + id.text);
        }
    }

    void refine() {
        next();
        const Token& parent = identifier("goal id");
        Refinement ref;
        ref.parent = parent.text;
        if (accept_word("and")) ref.mode = RefineMode::And;
        else if (accept_word("or")) ref.mode = RefineMode::Or;
        else unexpected(peek(), "'and' or 'or'");
        expect(Tok::LBrace, "'{'");
        std::vector<Pos> child_pos;
        for (;;) {
            const Token& c = identifier("goal id");
            ref.children.push_back(c.text);
            child_pos.push_back(c.pos);
            if (peek().kind == Tok::Comma) {
                next();
                continue;
            }
            expect(Tok::RBrace, "',' or '}'");
            break;
        }
        if (doc_.graph.refinements.contains(parent.text)) src_.fail(parent.pos, "goal " + parent.text + " is refined twice");
        refine_pos_[parent.text] = {parent.pos, std::move(child_pos)};
        doc_.graph.refinements.emplace(parent.text, std::move(ref));
    }

    std::string reference(std::string_view what) {
        const Token& t = peek();
        if (t.kind == Tok::Word && t.text == kAny) {
            next();
            return std::string(kAny);
        }
        return name(what).text;
    }

    std::int64_t bandwidth_value() {
        Pos p = peek().pos;
        auto v = integer("bandwidth value", kMaxKbps);
        if (accept_word("kbps")) {
        } else if (accept_word("mbps")) {
            v *= 1000;
        } else {
            unexpected(peek(), "'kbps' or 'mbps'");
        }
        if (v <= 0 || v > kMaxKbps) src_.fail(p, "bandwidth must be between 1 kbps and 1000000000 kbps");
        return v;
    }

    RuleBody body() {
        RuleBody b;
        expect(Tok::LBrace, "'{'");
        expect_word("subject");
        b.subject = name("subject").text;
        expect_word("target");
        b.target = name("target").text;
        expect_word("if");
        bool seen[4] = {false, false, false, false};
        b.pos.source = b.pos.destination = b.pos.service = b.pos.time = peek().pos;
        while (!(peek().kind == Tok::Word && peek().text == "then")) {
            const Token& kw = peek();
            int slot = -1;
            if (kw.kind == Tok::Word) {
                if (kw.text == "source") slot = 0;
                else if (kw.text == "dest") slot = 1;
                else if (kw.text == "service") slot = 2;
                else if (kw.text == "time") slot = 3;
            }
            if (slot < 0) unexpected(kw, "'source', 'dest', 'service', 'time' or 'then'");
            if (seen[slot]) src_.fail(kw.pos, "condition field '" + kw.text + "' given twice");
            seen[slot] = true;
            next();
            Pos p = peek().pos;
            switch (slot) {
                case 0: b.condition.source = reference("entity"); b.pos.source = p; break;
                case 1: b.condition.destination = reference("entity"); b.pos.destination = p; break;
                case 2: b.condition.service = reference("service"); b.pos.service = p; break;
                default: b.condition.time = reference("time class"); b.pos.time = p; break;
            }
        }
        b.pos.actions = peek().pos;
        next();  // then
        std::optional<Scope> scope;
        Bandwidth bw;
        bool has_bw = false;
        auto once = [&](bool already, const Token& t) {
            if (already) src_.fail(t.pos, "action '" + t.text + "' given twice");
        };
        while (peek().kind != Tok::RBrace) {
            const Token& a = peek();
            if (a.kind != Tok::Word) unexpected(a, "action or '}'");
            if (a.text == "allow" || a.text == "deny") {
                once(b.actions.admission.has_value(), a);
                b.actions.admission = a.text == "allow" ? Admission::Allow : Admission::Deny;
                next();
            } else if (a.text == "min") {
                once(bw.min_kbps.has_value(), a);
                next();
                bw.min_kbps = bandwidth_value();
                has_bw = true;
            } else if (a.text == "max") {
                once(bw.max_kbps.has_value(), a);
                next();
                bw.max_kbps = bandwidth_value();
                has_bw = true;
            } else if (a.text == "per-connection" || a.text == "aggregate") {
                once(scope.has_value(), a);
                scope = a.text == "aggregate" ? Scope::Aggregate : Scope::PerConnection;
                next();
            } else if (a.text == "priority") {
                once(b.actions.priority.has_value(), a);
                next();
                Pos p = peek().pos;
                auto v = integer("priority");
                if (v < 1 || v > 9) src_.fail(p, "priority must be in [1, 9]");
                b.actions.priority = static_cast<int>(v);
            } else {
                unexpected(a, "action (allow, deny, min, max, per-connection, aggregate, priority) or '}'");
            }
        }
        next();  // }
        if (scope && !has_bw) src_.fail(b.pos.actions, "a bandwidth scope needs a min or max bound");
        if (has_bw) {
            bw.scope = scope.value_or(Scope::Aggregate);
            b.actions.bandwidth = bw;
        }
        if (auto v = validate_actions(b.actions); !v.empty()) src_.fail(b.pos.actions, v.front());
        return b;
    }

    void bind() {
        next();
        const Token& goal = identifier("goal id");
        RuleBody b = body();
        if (doc_.bindings.contains(goal.text)) src_.fail(goal.pos, "goal " + goal.text + " is bound twice");
        doc_.bindings.emplace(goal.text, Binding{goal.text, b.subject, b.target, b.condition, b.actions});
        bind_pos_[goal.text] = {goal.pos, b.pos};
    }

    void rule() {
        next();
        const Token& id = identifier("rule id");
        PolicyRule r;
        r.id = id.text;
        Pos from_pos;
        if (accept_word("from")) {
            from_pos = peek().pos;
            r.based_on = identifier("goal id").text;
        }
        expect_word("order");
        Pos order_pos = peek().pos;
        r.order = static_cast<int>(integer("rule order"));
        RuleBody b = body();
        r.subject = b.subject;
        r.target = b.target;
        r.condition = b.condition;
        r.actions = b.actions;
        if (rule_ids_.contains(r.id)) src_.fail(id.pos, "duplicate rule " + r.id);
        if (rule_orders_.contains(r.order)) src_.fail(order_pos, "rule order " + std::to_string(r.order) + " is used twice");
        rule_ids_.insert(r.id);
        rule_orders_.insert(r.order);
        rule_pos_.push_back({from_pos, b.pos});
        doc_.rules.push_back(std::move(r));
    }

    void check_refs(const Condition& c, const BodyPositions& p) {
        const auto& cat = doc_.catalogs;
        auto probe = [&](auto&& fn, Pos pos) {
            try {
                fn();
            } catch (const ValidationError& e) {
                src_.fail(pos, e.what());
            }
        };
        probe([&] { cat.entity(c.source); }, p.source);
        probe([&] { cat.entity(c.destination); }, p.destination);
        probe([&] { cat.service(c.service); }, p.service);
        probe([&] { cat.time(c.time); }, p.time);
    }

    void resolve() {
        const auto& g = doc_.graph;
        for (const auto& [parent, rp] : refine_pos_) {
            if (!g.contains(parent)) src_.fail(rp.first, "unknown goal " + parent);
            const auto& children = g.refinements.at(parent).children;
            std::set<std::string, IdLess> seen;
            for (std::size_t i = 0; i < children.size(); ++i) {
                if (children[i] == parent) src_.fail(rp.second[i], "goal " + parent + " refines itself");
                if (!g.contains(children[i])) src_.fail(rp.second[i], "unknown goal " + children[i]);
                if (!seen.insert(children[i]).second) src_.fail(rp.second[i], "goal " + children[i] + " listed twice");
            }
        }
        if (auto cycles = find_cycles(g); !cycles.empty()) {
            std::string names;
            for (const auto& id : cycles.front()) names += (names.empty() ? "" : ", ") + id;
            src_.fail(refine_pos_.at(cycles.front().front()).first, "cycle among goals: " + names);
        }
        for (const auto& [goal, bp] : bind_pos_) {
            if (!g.contains(goal)) src_.fail(bp.first, "unknown goal " + goal);
            if (!g.is_leaf(goal)) src_.fail(bp.first, "goal " + goal + " is refined; only operational goals can be bound");
            check_refs(doc_.bindings.at(goal).condition, bp.second);
        }
        for (std::size_t i = 0; i < doc_.rules.size(); ++i) {
            const auto& r = doc_.rules[i];
            if (r.based_on && !g.contains(*r.based_on)) src_.fail(rule_pos_[i].first, "unknown goal " + *r.based_on);
            check_refs(r.condition, rule_pos_[i].second);
        }
    }

    Source src_;
    std::vector<Token> toks_;
    std::size_t at_ = 0;
    Document doc_;
    std::set<std::string> meta_keys_;
    std::map<std::string, std::pair<Pos, std::vector<Pos>>, IdLess> refine_pos_;
    std::map<std::string, std::pair<Pos, BodyPositions>, IdLess> bind_pos_;
    std::vector<std::pair<Pos, BodyPositions>> rule_pos_;
    std::set<std::string, IdLess> rule_ids_;
    std::set<int> rule_orders_;
};

// ---------------------------------------------------------------------------
// Serialization

std::string quote(std::string_view s) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '"': out += "\\\""; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20 || c == 0x7f) {
                    out += "\\x";
                    out += kHex[(c >> 4) & 0xf];
                    out += kHex[c & 0xf];
                } else {
                    out += c;
                }
        }
    }
    out += '"';
    return out;
}

std::string name_text(std::string_view s) { return is_identifier(s) ? std::string(s) : quote(s); }

void write_body(std::string& out, const std::string& subject, const std::string& target, const Condition& c,
                const ActionSet& a) {
    out += "  subject " + name_text(subject) + "\n";
    out += "  target " + name_text(target) + "\n";
    out += "  if source " + name_text(c.source) + " dest " + name_text(c.destination) + " service " +
           name_text(c.service) + " time " + name_text(c.time) + "\n";
    out += "  then";
    if (a.admission) out += *a.admission == Admission::Allow ? " allow" : " deny";
    if (a.bandwidth) {
        if (a.bandwidth->min_kbps) out += " min " + std::to_string(*a.bandwidth->min_kbps) + " kbps";
        if (a.bandwidth->max_kbps) out += " max " + std::to_string(*a.bandwidth->max_kbps) + " kbps";
        out += a.bandwidth->scope == Scope::PerConnection ? " per-connection" : " aggregate";
    }
    if (a.priority) out += " priority " + std::to_string(*a.priority);
    out += "\n}\n";
}

}  // namespace

std::string format_days(DaySet days) {
    std::string out;
    int d = 0;
    while (d < 7) {
        if (!(days >> d & 1)) {
            ++d;
            continue;
        }
        int e = d;
        while (e + 1 < 7 && (days >> (e + 1) & 1)) ++e;
        if (!out.empty()) out += ',';
        out += kDayNames[d];
        if (e > d) {
            out += '-';
            out += kDayNames[e];
        }
        d = e + 1;
    }
    return out;
}

std::string format_minute(int minute) {
    std::string hh = std::to_string(minute / 60);
    std::string mm = std::to_string(minute % 60);
    if (hh.size() < 2) hh.insert(0, "0");
    if (mm.size() < 2) mm.insert(0, "0");
    return hh + ":" + mm;
}

Document parse(std::string_view text) { return Parser(text).run(); }

std::string serialize(const Document& doc) {
    std::string out = "# pbm policy document\n";
    auto section = [&](bool nonempty) {
        if (nonempty) out += "\n";
        return nonempty;
    };

    const auto& cat = doc.catalogs;
    if (section(!doc.meta.empty() || cat.utc_offset_minutes != 0)) {
        for (const auto& [k, v] : doc.meta) out += "meta " + k + " " + quote(v) + "\n";
        if (cat.utc_offset_minutes != 0) out += "meta tz " + quote(format_utc_offset(cat.utc_offset_minutes)) + "\n";
    }
    if (section(!cat.entities.empty())) {
        for (const auto& [name, g] : cat.entities) {
            out += "entity " + name_text(name);
            if (g.any) {
                out += " = any\n";
                continue;
            }
            out += " {";
            bool first = true;
            for (const auto& m : g.members) {
                out += first ? " " : ", ";
                out += m.str();
                first = false;
            }
            out += " }\n";
        }
    }
    if (section(!cat.services.empty())) {
        for (const auto& [name, s] : cat.services) {
            out += "service " + name_text(name);
            if (s.any) {
                out += " = any\n";
                continue;
            }
            out += " {";
            bool first = true;
            for (const auto& m : s.matchers) {
                out += first ? " " : ", ";
                out += std::string(to_string(m.protocol)) + " " + std::to_string(m.low);
                if (m.high != m.low) out += "-" + std::to_string(m.high);
                first = false;
            }
            out += " }\n";
        }
    }
    if (section(!cat.times.empty())) {
        for (const auto& [name, t] : cat.times) {
            out += "time " + name_text(name);
            if (t.any) {
                out += " = any\n";
                continue;
            }
            out += " {";
            bool first = true;
            for (const auto& w : t.windows) {
                out += first ? " " : ", ";
                out += format_days(w.days) + " " + format_minute(w.start_minute) + "-" + format_minute(w.end_minute);
                first = false;
            }
            out += " }\n";
        }
    }
    if (section(!doc.graph.goals.empty())) {
        for (const auto& [id, g] : doc.graph.goals) {
            out += "goal " + id + " level " + std::to_string(g.level) + " " + quote(g.description) + "\n";
        }
    }
    if (section(!doc.graph.refinements.empty())) {
        for (const auto& [id, r] : doc.graph.refinements) {
            out += "refine " + id + (r.mode == RefineMode::And ? " and {" : " or {");
            for (std::size_t i = 0; i < r.children.size(); ++i) out += (i ? ", " : " ") + r.children[i];
            out += " }\n";
        }
    }
    if (!doc.bindings.empty()) {
        for (const auto& [goal, b] : doc.bindings) {
            out += "\nbind " + goal + " {\n";
            write_body(out, b.subject, b.target, b.condition, b.actions);
        }
    }
    if (!doc.rules.empty()) {
        std::vector<const PolicyRule*> sorted;
        for (const auto& r : doc.rules) sorted.push_back(&r);
        std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->order < b->order; });
        for (const auto* r : sorted) {
            out += "\nrule " + r->id;
            if (r->based_on) out += " from " + *r->based_on;
            out += " order " + std::to_string(r->order) + " {\n";
            write_body(out, r->subject, r->target, r->condition, r->actions);
        }
    }
    return out;
}

std::vector<std::string> validate_document(const Document& doc) {
    std::vector<std::string> out = validate_graph(doc.graph);
    for (auto& v : validate_catalogs(doc.catalogs)) out.push_back(std::move(v));
    for (const auto& [key, value] : doc.meta) {
        if (!is_identifier(key)) out.push_back("meta key '" + key + "' is not an identifier");
        if (key == "tz") out.push_back("meta key tz belongs in catalogs.utc_offset_minutes");
    }
    for (const auto& [goal, b] : doc.bindings) {
        if (b.goal != goal) out.push_back("binding " + goal + " stored under mismatched goal " + b.goal);
        if (!doc.graph.contains(goal)) out.push_back("binding for unknown goal " + goal);
        else if (!doc.graph.is_leaf(goal)) out.push_back("binding for refined goal " + goal);
        for (const auto& v : validate_actions(b.actions)) out.push_back("binding " + goal + ": " + v);
        try {
            check_condition(b.condition, doc.catalogs);
        } catch (const ValidationError& e) {
            out.push_back("binding " + goal + ": " + e.what());
        }
    }
    for (auto& v : validate_rules(doc.rules, doc.catalogs)) out.push_back(std::move(v));
    for (const auto& r : doc.rules) {
        if (!is_identifier(r.id)) out.push_back("rule id '" + r.id + "' is not an identifier");
        if (r.based_on && !doc.graph.contains(*r.based_on)) out.push_back("rule " + r.id + " is based on unknown goal " + *r.based_on);
    }
    for (const auto& [id, g] : doc.graph.goals) {
        if (!is_identifier(id)) out.push_back("goal id '" + id + "' is not an identifier");
    }
    if (!std::is_sorted(doc.rules.begin(), doc.rules.end(),
                        [](const PolicyRule& a, const PolicyRule& b) { return a.order < b.order; })) {
        out.push_back("rules are not sorted by order");
    }
    return out;
}

}  // namespace pbm
