#include "streamon/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>

namespace streamon {

namespace {

// ------------------------------- tokenizer ---------------------------------

enum class Tok {
    End,
    Number,
    Ident,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    EqEq,
    BangEq,
    Lt,
    Gt,
    AmpAmp,
    PipePipe,
    Bang,
};

struct Token {
    Tok kind = Tok::End;
    double number = 0.0;
    std::string text;
    size_t pos = 0;
};

class Lexer {
public:
    explicit Lexer(const std::string& src) : src_(src) { advance(); }

    const Token& peek() const { return cur_; }

    Token take() {
        Token t = cur_;
        advance();
        return t;
    }

private:
    void advance() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) {
            ++pos_;
        }
        cur_ = Token{};
        cur_.pos = pos_;
        if (pos_ >= src_.size()) {
            cur_.kind = Tok::End;
            return;
        }
        char c = src_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && pos_ + 1 < src_.size() &&
             std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
            const char* begin = src_.data() + pos_;
            const char* end = src_.data() + src_.size();
            double v = 0.0;
            auto [p, ec] = std::from_chars(begin, end, v);
            if (ec != std::errc()) throw SyntaxError("malformed number", pos_);
            cur_.kind = Tok::Number;
            cur_.number = v;
            pos_ = static_cast<size_t>(p - src_.data());
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t start = pos_;
            while (pos_ < src_.size()) {
                char d = src_[pos_];
                if (std::isalnum(static_cast<unsigned char>(d)) || d == '_' || d == '.') {
                    ++pos_;
                } else {
                    break;
                }
            }
            cur_.kind = Tok::Ident;
            cur_.text = src_.substr(start, pos_ - start);
            return;
        }
        auto two = [&](char a, char b) {
            return c == a && pos_ + 1 < src_.size() && src_[pos_ + 1] == b;
        };
        if (two('=', '=')) { cur_.kind = Tok::EqEq; pos_ += 2; return; }
        if (two('!', '=')) { cur_.kind = Tok::BangEq; pos_ += 2; return; }
        if (two('&', '&')) { cur_.kind = Tok::AmpAmp; pos_ += 2; return; }
        if (two('|', '|')) { cur_.kind = Tok::PipePipe; pos_ += 2; return; }
        ++pos_;
        switch (c) {
            case '(': cur_.kind = Tok::LParen; return;
            case ')': cur_.kind = Tok::RParen; return;
            case '[': cur_.kind = Tok::LBracket; return;
            case ']': cur_.kind = Tok::RBracket; return;
            case ',': cur_.kind = Tok::Comma; return;
            case '+': cur_.kind = Tok::Plus; return;
            case '-': cur_.kind = Tok::Minus; return;
            case '*': cur_.kind = Tok::Star; return;
            case '/': cur_.kind = Tok::Slash; return;
            case '%': cur_.kind = Tok::Percent; return;
            case '<': cur_.kind = Tok::Lt; return;
            case '>': cur_.kind = Tok::Gt; return;
            case '!': cur_.kind = Tok::Bang; return;
            default:
                throw SyntaxError(std::string("unexpected character '") + c + "'", pos_ - 1);
        }
    }

    const std::string& src_;
    size_t pos_ = 0;
    Token cur_;
};

// ------------------------------- op tables ---------------------------------

struct OpInfo {
    const char* name;
    Op op;
    int arity;  // 1 or 2
};

constexpr OpInfo kOps[] = {
    {"SUM", Op::Sum, 2},   {"DIFF", Op::Diff, 2}, {"MULT", Op::Mult, 2},
    {"DIV", Op::Div, 2},   {"MOD", Op::Mod, 2},   {"EQ", Op::Eq, 2},
    {"NEQ", Op::Neq, 2},   {"LT", Op::Lt, 2},     {"GT", Op::Gt, 2},
    {"AND", Op::And, 2},   {"OR", Op::Or, 2},     {"XOR", Op::Xor, 2},
    {"NOT", Op::Not, 1},   {"SQRT", Op::Sqrt, 1}, {"LOG", Op::Log, 1},
    {"POW", Op::Pow, 2},
};

const OpInfo* op_by_name(const std::string& name) {
    for (const auto& info : kOps) {
        if (name == info.name) return &info;
    }
    return nullptr;
}

// ------------------------------- parser ------------------------------------

ExprPtr make_unary(Op op, ExprPtr operand) {
    auto e = std::make_unique<Expr>();
    e->kind = Expr::Kind::Unary;
    e->op = op;
    e->lhs = std::move(operand);
    return e;
}

ExprPtr make_binary(Op op, ExprPtr l, ExprPtr r) {
    auto e = std::make_unique<Expr>();
    e->kind = Expr::Kind::Binary;
    e->op = op;
    e->lhs = std::move(l);
    e->rhs = std::move(r);
    return e;
}

class Parser {
public:
    explicit Parser(const std::string& src) : lex_(src) {}

    ExprPtr parse() {
        ExprPtr e = parse_logic();
        if (lex_.peek().kind != Tok::End) {
            throw SyntaxError("trailing input after expression", lex_.peek().pos);
        }
        return e;
    }

private:
    void expect(Tok kind, const char* what) {
        if (lex_.peek().kind != kind) throw SyntaxError(std::string("expected ") + what,
                                                        lex_.peek().pos);
        lex_.take();
    }

    // Lowest tier: AND / OR / XOR, all equal precedence, left-associative.
    ExprPtr parse_logic() {
        ExprPtr e = parse_compare();
        while (true) {
            Tok k = lex_.peek().kind;
            if (k == Tok::AmpAmp) {
                lex_.take();
                e = make_binary(Op::And, std::move(e), parse_compare());
            } else if (k == Tok::PipePipe) {
                lex_.take();
                e = make_binary(Op::Or, std::move(e), parse_compare());
            } else if (k == Tok::Ident &&
                       (lex_.peek().text == "AND" || lex_.peek().text == "OR" ||
                        lex_.peek().text == "XOR")) {
                // Keyword form used infix: "a AND b". The function form is
                // handled at primary level, so an Ident here followed by '('
                // cannot occur (it would have been consumed as a call).
                std::string w = lex_.take().text;
                Op op = (w == "AND") ? Op::And : (w == "OR") ? Op::Or : Op::Xor;
                e = make_binary(op, std::move(e), parse_compare());
            } else {
                break;
            }
        }
        return e;
    }

    ExprPtr parse_compare() {
        ExprPtr e = parse_additive();
        while (true) {
            Tok k = lex_.peek().kind;
            Op op;
            if (k == Tok::EqEq) op = Op::Eq;
            else if (k == Tok::BangEq) op = Op::Neq;
            else if (k == Tok::Lt) op = Op::Lt;
            else if (k == Tok::Gt) op = Op::Gt;
            else break;
            lex_.take();
            e = make_binary(op, std::move(e), parse_additive());
        }
        return e;
    }

    ExprPtr parse_additive() {
        ExprPtr e = parse_multiplicative();
        while (true) {
            Tok k = lex_.peek().kind;
            if (k == Tok::Plus) {
                lex_.take();
                e = make_binary(Op::Sum, std::move(e), parse_multiplicative());
            } else if (k == Tok::Minus) {
                lex_.take();
                e = make_binary(Op::Diff, std::move(e), parse_multiplicative());
            } else {
                break;
            }
        }
        return e;
    }

    ExprPtr parse_multiplicative() {
        ExprPtr e = parse_unary();
        while (true) {
            Tok k = lex_.peek().kind;
            Op op;
            if (k == Tok::Star) op = Op::Mult;
            else if (k == Tok::Slash) op = Op::Div;
            else if (k == Tok::Percent) op = Op::Mod;
            else break;
            lex_.take();
            e = make_binary(op, std::move(e), parse_unary());
        }
        return e;
    }

    ExprPtr parse_unary() {
        const Token& t = lex_.peek();
        if (t.kind == Tok::Bang) {
            lex_.take();
            return make_unary(Op::Not, parse_unary());
        }
        if (t.kind == Tok::Minus) {
            lex_.take();
            ExprPtr operand = parse_unary();
            if (operand->kind == Expr::Kind::Const) {  // fold "-5"
                operand->value = -operand->value;
                return operand;
            }
            return make_binary(Op::Diff, Expr::make_const(0.0), std::move(operand));
        }
        return parse_primary();
    }

    ExprPtr parse_primary() {
        Token t = lex_.take();
        switch (t.kind) {
            case Tok::Number:
                return Expr::make_const(t.number);
            case Tok::LParen: {
                ExprPtr e = parse_logic();
                expect(Tok::RParen, "')'");
                return e;
            }
            case Tok::Ident:
                return parse_ident(std::move(t));
            default:
                throw SyntaxError("expected a value", t.pos);
        }
    }

    ExprPtr parse_ident(Token t) {
        // Operator spelled as a function call: SUM(a, b), NOT(x), ...
        if (const OpInfo* info = op_by_name(t.text)) {
            if (lex_.peek().kind != Tok::LParen) {
                throw SyntaxError("operator '" + t.text + "' needs arguments", t.pos);
            }
            lex_.take();
            ExprPtr first = parse_logic();
            if (info->arity == 1) {
                expect(Tok::RParen, "')'");
                return make_unary(info->op, std::move(first));
            }
            expect(Tok::Comma, "','");
            ExprPtr second = parse_logic();
            expect(Tok::RParen, "')'");
            return make_binary(info->op, std::move(first), std::move(second));
        }
        // Flow-local table value: table[name] or table[name][key].
        if (t.text == "table") {
            expect(Tok::LBracket, "'['");
            Token name = lex_.take();
            if (name.kind != Tok::Ident) throw SyntaxError("expected table name", name.pos);
            expect(Tok::RBracket, "']'");
            if (lex_.peek().kind == Tok::LBracket) {
                lex_.take();
                Token sub = lex_.take();
                if (sub.kind != Tok::Ident || sub.text != "key") {
                    throw SyntaxError("only [key] subscription is supported", sub.pos);
                }
                expect(Tok::RBracket, "']'");
            }
            auto e = std::make_unique<Expr>();
            e->kind = Expr::Kind::Table;
            e->name = name.text;
            return e;
        }
        // Timeout context value: ctx[name].
        if (t.text == "ctx") {
            expect(Tok::LBracket, "'['");
            Token name = lex_.take();
            if (name.kind != Tok::Ident) throw SyntaxError("expected context name", name.pos);
            expect(Tok::RBracket, "']'");
            auto e = std::make_unique<Expr>();
            e->kind = Expr::Kind::Ctx;
            e->name = name.text;
            return e;
        }
        // Dotted identifiers are packet fields and must be known.
        if (t.text.find('.') != std::string::npos) {
            auto id = field_from_name(t.text);
            if (!id) throw SyntaxError("unknown field '" + t.text + "'", t.pos);
            auto e = std::make_unique<Expr>();
            e->kind = Expr::Kind::Field;
            e->field = *id;
            return e;
        }
        // Plain name: metric, feature, or named constant; resolved by bind.
        auto e = std::make_unique<Expr>();
        e->kind = Expr::Kind::Name;
        e->name = std::move(t.text);
        return e;
    }

    Lexer lex_;
};

// ------------------------------ formatting ---------------------------------

const char* infix_symbol(Op op) {
    switch (op) {
        case Op::Sum: return "+";
        case Op::Diff: return "-";
        case Op::Mult: return "*";
        case Op::Div: return "/";
        case Op::Mod: return "%";
        case Op::Eq: return "==";
        case Op::Neq: return "!=";
        case Op::Lt: return "<";
        case Op::Gt: return ">";
        case Op::And: return "&&";
        case Op::Or: return "||";
        default: return nullptr;  // XOR, POW and unaries print as calls
    }
}

const char* call_name(Op op) {
    for (const auto& info : kOps) {
        if (info.op == op) return info.name;
    }
    return "?";
}

void format_number(std::string& out, double v) {
    char buf[64];
    // Shortest representation that round-trips a double.
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    out.append(buf, p);
}

void render(const Expr& e, std::string& out) {
    switch (e.kind) {
        case Expr::Kind::Const:
            if (e.value < 0) {
                out.push_back('-');
                format_number(out, -e.value);
            } else {
                format_number(out, e.value);
            }
            return;
        case Expr::Kind::Field:
            out += field_name(e.field);
            return;
        case Expr::Kind::Name:
            out += e.name;
            return;
        case Expr::Kind::Table:
            out += "table[" + e.name + "]";
            return;
        case Expr::Kind::Ctx:
            out += "ctx[" + e.name + "]";
            return;
        case Expr::Kind::Unary:
            out += call_name(e.op);
            out.push_back('(');
            render(*e.lhs, out);
            out.push_back(')');
            return;
        case Expr::Kind::Binary: {
            if (const char* sym = infix_symbol(e.op)) {
                out.push_back('(');
                render(*e.lhs, out);
                out.push_back(' ');
                out += sym;
                out.push_back(' ');
                render(*e.rhs, out);
                out.push_back(')');
            } else {
                out += call_name(e.op);
                out.push_back('(');
                render(*e.lhs, out);
                out += ", ";
                render(*e.rhs, out);
                out.push_back(')');
            }
            return;
        }
    }
}

// ------------------------------ evaluation ---------------------------------

inline bool truthy(double v) { return v != 0.0; }

}  // namespace

ExprPtr Expr::make_const(double v) {
    auto e = std::make_unique<Expr>();
    e->kind = Kind::Const;
    e->value = v;
    return e;
}

ExprPtr parse_expr(const std::string& src) { return Parser(src).parse(); }

std::string to_string(const Expr& e) {
    std::string out;
    render(e, out);
    return out;
}

std::optional<double> named_constant(const std::string& name) {
    // Protocol numbers, TCP flag masks, and DNS rcode 3; the vocabulary
    // programs need to write filters without magic numbers.
    struct Named {
        const char* name;
        double value;
    };
    static constexpr Named kNamed[] = {
        {"ICMP", 1.0},     {"TCP", 6.0},   {"UDP", 17.0},  {"FIN", 1.0},
        {"SYN", 2.0},      {"RST", 4.0},   {"PSH", 8.0},   {"ACK", 16.0},
        {"URG", 32.0},     {"SYNACK", 18.0}, {"NXDOMAIN", 3.0},
    };
    for (const auto& n : kNamed) {
        if (name == n.name) return n.value;
    }
    return std::nullopt;
}

void bind_expr(Expr& e, const BindScope& scope, std::vector<std::string>& issues) {
    switch (e.kind) {
        case Expr::Kind::Name: {
            int m = scope.metric_slot(e.name);
            if (m >= 0) {
                e.ref = Expr::RefKind::Metric;
                e.slot = m;
                return;
            }
            int f = scope.feature_slot(e.name);
            if (f >= 0) {
                e.ref = Expr::RefKind::Feature;
                e.slot = f;
                return;
            }
            if (auto c = named_constant(e.name)) {
                e.kind = Expr::Kind::Const;
                e.value = *c;
                return;
            }
            issues.push_back("unknown name '" + e.name + "' in expression");
            return;
        }
        case Expr::Kind::Unary:
            bind_expr(*e.lhs, scope, issues);
            return;
        case Expr::Kind::Binary:
            bind_expr(*e.lhs, scope, issues);
            bind_expr(*e.rhs, scope, issues);
            return;
        default:
            return;
    }
}

std::optional<double> eval_expr(const Expr& e, const EvalContext& env) {
    switch (e.kind) {
        case Expr::Kind::Const:
            return e.value;
        case Expr::Kind::Field:
            return env.field(e.field);
        case Expr::Kind::Name:
            if (e.ref == Expr::RefKind::Metric) return env.metric(e.slot);
            if (e.ref == Expr::RefKind::Feature) return env.feature(e.slot);
            return std::nullopt;  // unbound name: validation should prevent this
        case Expr::Kind::Table:
            return env.table(e.name);
        case Expr::Kind::Ctx:
            return env.ctx(e.name);
        case Expr::Kind::Unary: {
            auto v = eval_expr(*e.lhs, env);
            if (!v) return std::nullopt;
            switch (e.op) {
                case Op::Not:
                    return truthy(*v) ? 0.0 : 1.0;
                case Op::Sqrt:
                    if (*v < 0.0) return std::nullopt;
                    return std::sqrt(*v);
                case Op::Log:
                    if (*v <= 0.0) return std::nullopt;
                    return std::log(*v);
                default:
                    return std::nullopt;
            }
        }
        case Expr::Kind::Binary: {
            auto a = eval_expr(*e.lhs, env);
            if (!a) return std::nullopt;
            auto b = eval_expr(*e.rhs, env);
            if (!b) return std::nullopt;
            switch (e.op) {
                case Op::Sum: return *a + *b;
                case Op::Diff: return *a - *b;
                case Op::Mult: return *a * *b;
                case Op::Div:
                    if (*b == 0.0) return std::nullopt;
                    return *a / *b;
                case Op::Mod:
                    if (*b == 0.0) return std::nullopt;
                    return std::fmod(*a, *b);
                case Op::Eq: return *a == *b ? 1.0 : 0.0;
                case Op::Neq: return *a != *b ? 1.0 : 0.0;
                case Op::Lt: return *a < *b ? 1.0 : 0.0;
                case Op::Gt: return *a > *b ? 1.0 : 0.0;
                case Op::And: return truthy(*a) && truthy(*b) ? 1.0 : 0.0;
                case Op::Or: return truthy(*a) || truthy(*b) ? 1.0 : 0.0;
                case Op::Xor: return truthy(*a) != truthy(*b) ? 1.0 : 0.0;
                case Op::Pow: {
                    double r = std::pow(*a, *b);
                    if (!std::isfinite(r)) return std::nullopt;
                    return r;
                }
                default:
                    return std::nullopt;
            }
        }
    }
    return std::nullopt;
}

void collect_fields(const Expr& e, std::vector<FieldId>& out) {
    switch (e.kind) {
        case Expr::Kind::Field:
            out.push_back(e.field);
            return;
        case Expr::Kind::Unary:
            collect_fields(*e.lhs, out);
            return;
        case Expr::Kind::Binary:
            collect_fields(*e.lhs, out);
            collect_fields(*e.rhs, out);
            return;
        default:
            return;
    }
}

void collect_names(const Expr& e, std::vector<std::string>& out) {
    switch (e.kind) {
        case Expr::Kind::Name:
            out.push_back(e.name);
            return;
        case Expr::Kind::Unary:
            collect_names(*e.lhs, out);
            return;
        case Expr::Kind::Binary:
            collect_names(*e.lhs, out);
            collect_names(*e.rhs, out);
            return;
        default:
            return;
    }
}

}  // namespace streamon
