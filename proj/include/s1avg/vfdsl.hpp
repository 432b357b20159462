#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "s1avg/common.hpp"
#include "s1avg/geometry.hpp"

namespace s1avg::dsl {

struct SyntaxError : Error {
    int line = 0, col = 0;
    std::string expected;
    SyntaxError(int line_, int col_, std::string expected_)
        : Error("syntax error at " + std::to_string(line_) + ":" + std::to_string(col_) + ", expected " +
                expected_),
          line(line_),
          col(col_),
          expected(std::move(expected_)) {}
};

struct UnknownIdentifier : Error {
    int line = 0, col = 0;
    UnknownIdentifier(int line_, int col_, const std::string& name)
        : Error("unknown function '" + name + "' at " + std::to_string(line_) + ":" + std::to_string(col_)),
          line(line_),
          col(col_) {}
};

struct UnboundVariable : Error {
    explicit UnboundVariable(const std::string& name) : Error("unbound variable '" + name + "'") {}
};

// ---------------------------------------------------------------------------
// Abstract syntax
// ---------------------------------------------------------------------------

struct ExprNode;
using Expr = std::shared_ptr<const ExprNode>;

struct ExprNode {
    enum class Kind { Number, Variable, Unary, Binary, Call };
    Kind kind = Kind::Number;
    double number = 0.0;  // Number (always nonnegative; negatives are Unary)
    std::string name;     // Variable or Call
    char op = 0;          // Binary: + - * / ^ ; Unary: -
    Expr lhs, rhs;        // Binary both; Unary/Call use lhs
};

inline Expr make_number(double v) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::Number;
    n->number = v;
    return n;
}
inline Expr make_variable(std::string name) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::Variable;
    n->name = std::move(name);
    return n;
}
inline Expr make_unary(Expr a) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::Unary;
    n->op = '-';
    n->lhs = std::move(a);
    return n;
}
inline Expr make_binary(char op, Expr a, Expr b) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::Binary;
    n->op = op;
    n->lhs = std::move(a);
    n->rhs = std::move(b);
    return n;
}
inline Expr make_call(std::string fn, Expr a) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::Call;
    n->name = std::move(fn);
    n->lhs = std::move(a);
    return n;
}

inline bool is_known_function(std::string_view s) {
    return s == "sin" || s == "cos" || s == "exp" || s == "sqrt" || s == "abs";
}

// ---------------------------------------------------------------------------
// Parser: recursive descent with standard precedence
//   ^ (right-assoc)  >  unary -  >  * /  >  + -
// ---------------------------------------------------------------------------

namespace detail {

class Parser {
public:
    explicit Parser(std::string_view src) : src_(src) {}

    Expr parse() {
        Expr e = expression(0);
        skip_ws();
        if (pos_ < src_.size()) fail("end of input");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& expected) { throw SyntaxError(line_, col_, expected); }

    void advance() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    void skip_ws() {
        while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\r' ||
                                      src_[pos_] == '\n'))
            advance();
    }

    char peek() {
        skip_ws();
        return pos_ < src_.size() ? src_[pos_] : '\0';
    }

    bool accept(char c) {
        if (peek() == c) {
            advance();
            return true;
        }
        return false;
    }

    void check_depth(int depth) {
        if (depth > 200) fail("a shallower expression (nesting limit exceeded)");
    }

    Expr expression(int depth) {
        check_depth(depth);
        Expr e = term(depth + 1);
        for (;;) {
            char c = peek();
            if (c == '+' || c == '-') {
                advance();
                e = make_binary(c, e, term(depth + 1));
            } else {
                return e;
            }
        }
    }

    Expr term(int depth) {
        check_depth(depth);
        Expr e = unary(depth + 1);
        for (;;) {
            char c = peek();
            if (c == '*' || c == '/') {
                advance();
                e = make_binary(c, e, unary(depth + 1));
            } else {
                return e;
            }
        }
    }

    Expr unary(int depth) {
        check_depth(depth);
        if (accept('-')) return make_unary(unary(depth + 1));
        return power(depth + 1);
    }

    Expr power(int depth) {
        check_depth(depth);
        Expr base = primary(depth + 1);
        if (accept('^')) return make_binary('^', base, unary(depth + 1));
        return base;
    }

    Expr primary(int depth) {
        check_depth(depth);
        char c = peek();
        if (c == '(') {
            advance();
            Expr e = expression(depth + 1);
            if (!accept(')')) fail("')'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier(depth);
        fail("a number, variable, function call or '('");
    }

    Expr number() {
        skip_ws();
        const std::size_t start = pos_;
        const int l = line_, cc = col_;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
        if (pos_ < src_.size() && src_[pos_] == '.') {
            advance();
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t mark = pos_;
            advance();
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) advance();
            if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
            } else {
                pos_ = mark; // 'e' belongs to a following identifier, not this literal
            }
        }
        if (pos_ == start) throw SyntaxError(l, cc, "a number");
        const std::string text(src_.substr(start, pos_ - start));
        try {
            return make_number(std::stod(text));
        } catch (const std::exception&) {
            throw SyntaxError(l, cc, "a parseable number");
        }
    }

    Expr identifier(int depth) {
        skip_ws();
        const int l = line_, cc = col_;
        const std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
            advance();
        std::string name(src_.substr(start, pos_ - start));
        if (peek() == '(') {
            if (!is_known_function(name)) throw UnknownIdentifier(l, cc, name);
            advance();
            Expr arg = expression(depth + 1);
            if (!accept(')')) fail("')'");
            return make_call(std::move(name), std::move(arg));
        }
        return make_variable(std::move(name));
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1, col_ = 1;
};

inline int print_precedence(const ExprNode& n) {
    switch (n.kind) {
        case ExprNode::Kind::Number:
        case ExprNode::Kind::Variable:
        case ExprNode::Kind::Call:
            return 5;
        case ExprNode::Kind::Unary:
            return 3;
        case ExprNode::Kind::Binary:
            return (n.op == '^') ? 4 : (n.op == '*' || n.op == '/') ? 2 : 1;
    }
    return 5;
}

inline void print_rec(const Expr& e, std::string& out) {
    const auto wrapped = [&out](const Expr& c) {
        out += '(';
        print_rec(c, out);
        out += ')';
    };
    switch (e->kind) {
        case ExprNode::Kind::Number: {
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.17g", e->number);
            out += buf;
            return;
        }
        case ExprNode::Kind::Variable:
            out += e->name;
            return;
        case ExprNode::Kind::Call:
            out += e->name;
            out += '(';
            print_rec(e->lhs, out);
            out += ')';
            return;
        case ExprNode::Kind::Unary:
            out += '-';
            if (print_precedence(*e->lhs) < 3)
                wrapped(e->lhs);
            else
                print_rec(e->lhs, out);
            return;
        case ExprNode::Kind::Binary: {
            const int prec = print_precedence(*e);
            if (e->op == '^') {
                // right-assoc; the exponent slot re-parses at unary level
                if (print_precedence(*e->lhs) <= 4)
                    wrapped(e->lhs);
                else
                    print_rec(e->lhs, out);
                out += '^';
                if (print_precedence(*e->rhs) < 3)
                    wrapped(e->rhs);
                else
                    print_rec(e->rhs, out);
            } else {
                if (print_precedence(*e->lhs) < prec)
                    wrapped(e->lhs);
                else
                    print_rec(e->lhs, out);
                out += ' ';
                out += e->op;
                out += ' ';
                if (print_precedence(*e->rhs) <= prec)
                    wrapped(e->rhs);
                else
                    print_rec(e->rhs, out);
            }
            return;
        }
    }
}

} // namespace detail

inline Expr parse_expr(std::string_view src) { return detail::Parser(src).parse(); }

inline std::string print_expr(const Expr& e) {
    std::string out;
    detail::print_rec(e, out);
    return out;
}

inline bool expr_equal(const Expr& a, const Expr& b) {
    if (a->kind != b->kind) return false;
    switch (a->kind) {
        case ExprNode::Kind::Number:
            return a->number == b->number;
        case ExprNode::Kind::Variable:
            return a->name == b->name;
        case ExprNode::Kind::Call:
            return a->name == b->name && expr_equal(a->lhs, b->lhs);
        case ExprNode::Kind::Unary:
            return expr_equal(a->lhs, b->lhs);
        case ExprNode::Kind::Binary:
            return a->op == b->op && expr_equal(a->lhs, b->lhs) && expr_equal(a->rhs, b->rhs);
    }
    return false;
}

/// Free variables of an expression, in first-appearance order.
inline void collect_variables(const Expr& e, std::vector<std::string>& out) {
    switch (e->kind) {
        case ExprNode::Kind::Variable:
            for (const auto& v : out)
                if (v == e->name) return;
            out.push_back(e->name);
            return;
        case ExprNode::Kind::Unary:
        case ExprNode::Kind::Call:
            collect_variables(e->lhs, out);
            return;
        case ExprNode::Kind::Binary:
            collect_variables(e->lhs, out);
            collect_variables(e->rhs, out);
            return;
        default:
            return;
    }
}

/// IEEE double evaluation with named bindings; unbound variables throw,
/// numeric domain errors propagate as non-finite values.
inline double eval_expr(const Expr& e, const std::map<std::string, double>& bindings) {
    switch (e->kind) {
        case ExprNode::Kind::Number:
            return e->number;
        case ExprNode::Kind::Variable: {
            auto it = bindings.find(e->name);
            if (it == bindings.end()) throw UnboundVariable(e->name);
            return it->second;
        }
        case ExprNode::Kind::Unary:
            return -eval_expr(e->lhs, bindings);
        case ExprNode::Kind::Call: {
            const double a = eval_expr(e->lhs, bindings);
            if (e->name == "sin") return std::sin(a);
            if (e->name == "cos") return std::cos(a);
            if (e->name == "exp") return std::exp(a);
            if (e->name == "sqrt") return std::sqrt(a);
            return std::fabs(a);
        }
        case ExprNode::Kind::Binary: {
            const double a = eval_expr(e->lhs, bindings);
            const double b = eval_expr(e->rhs, bindings);
            switch (e->op) {
                case '+': return a + b;
                case '-': return a - b;
                case '*': return a * b;
                case '/': return a / b;
                default: return std::pow(a, b);
            }
        }
    }
    return 0.0;
}

struct EvalResult {
    double value = 0.0;
    bool finite = true;
};

inline EvalResult eval_checked(const Expr& e, const std::map<std::string, double>& bindings) {
    const double v = eval_expr(e, bindings);
    return EvalResult{v, std::isfinite(v)};
}

// ---------------------------------------------------------------------------
// Index-compiled form for hot loops
// ---------------------------------------------------------------------------

/// Postfix program over a fixed variable list; same IEEE operations in the
/// same order as eval_expr.
class CompiledExpr {
public:
    CompiledExpr() = default;

    CompiledExpr(const Expr& e, const std::vector<std::string>& var_names) {
        compile(e, var_names);
        if (depth_ > max_stack) throw Error("expression too deep to compile");
    }

    // Reentrant: the evaluation stack lives on the call stack.
    double operator()(const double* vars) const {
        std::size_t sp = 0;
        double st[max_stack];
        for (const Op& op : prog_) {
            switch (op.code) {
                case Code::Push: st[sp++] = op.value; break;
                case Code::Load: st[sp++] = vars[op.index]; break;
                case Code::Neg: st[sp - 1] = -st[sp - 1]; break;
                case Code::Add: --sp; st[sp - 1] += st[sp]; break;
                case Code::Sub: --sp; st[sp - 1] -= st[sp]; break;
                case Code::Mul: --sp; st[sp - 1] *= st[sp]; break;
                case Code::Div: --sp; st[sp - 1] /= st[sp]; break;
                case Code::Pow: --sp; st[sp - 1] = std::pow(st[sp - 1], st[sp]); break;
                case Code::Sin: st[sp - 1] = std::sin(st[sp - 1]); break;
                case Code::Cos: st[sp - 1] = std::cos(st[sp - 1]); break;
                case Code::Exp: st[sp - 1] = std::exp(st[sp - 1]); break;
                case Code::Sqrt: st[sp - 1] = std::sqrt(st[sp - 1]); break;
                case Code::Abs: st[sp - 1] = std::fabs(st[sp - 1]); break;
            }
        }
        return st[0];
    }

private:
    static constexpr int max_stack = 256;

    enum class Code { Push, Load, Neg, Add, Sub, Mul, Div, Pow, Sin, Cos, Exp, Sqrt, Abs };
    struct Op {
        Code code;
        double value = 0.0;
        int index = 0;
    };

    void compile(const Expr& e, const std::vector<std::string>& vars) {
        switch (e->kind) {
            case ExprNode::Kind::Number:
                prog_.push_back({Code::Push, e->number, 0});
                bump(1);
                return;
            case ExprNode::Kind::Variable: {
                for (int i = 0; i < int(vars.size()); ++i)
                    if (vars[i] == e->name) {
                        prog_.push_back({Code::Load, 0.0, i});
                        bump(1);
                        return;
                    }
                throw UnboundVariable(e->name);
            }
            case ExprNode::Kind::Unary:
                compile(e->lhs, vars);
                prog_.push_back({Code::Neg, 0.0, 0});
                return;
            case ExprNode::Kind::Call: {
                compile(e->lhs, vars);
                Code c = Code::Abs;
                if (e->name == "sin") c = Code::Sin;
                else if (e->name == "cos") c = Code::Cos;
                else if (e->name == "exp") c = Code::Exp;
                else if (e->name == "sqrt") c = Code::Sqrt;
                prog_.push_back({c, 0.0, 0});
                return;
            }
            case ExprNode::Kind::Binary: {
                compile(e->lhs, vars);
                compile(e->rhs, vars);
                Code c = Code::Pow;
                if (e->op == '+') c = Code::Add;
                else if (e->op == '-') c = Code::Sub;
                else if (e->op == '*') c = Code::Mul;
                else if (e->op == '/') c = Code::Div;
                prog_.push_back({c, 0.0, 0});
                cur_ -= 1;
                return;
            }
        }
    }

    void bump(int d) {
        cur_ += d;
        depth_ = std::max(depth_, cur_);
    }

    std::vector<Op> prog_;
    int depth_ = 0, cur_ = 0;
};

// ---------------------------------------------------------------------------
// System configuration files
//
// Line-based `key = value` entries under `[section]` headers; expressions are
// quoted strings, lists are comma-separated. The grammar is documented in
// docs/config_format.md.
// ---------------------------------------------------------------------------

struct SystemConfig {
    ModelKind kind = ModelKind::TrivialBundle;
    int k = 1;
    Expr omega;
    std::vector<Expr> x0; // empty -> omega * generator
    std::vector<Expr> x1;
    Vec m0;
    double L0 = 1.0;
    std::vector<double> eps; // descending
    double eps0 = 0.0;       // sup range for the constants; defaults to max eps
    Vec box_lo, box_hi;      // trivial: base box; hopf: band on the 3rd orbit coordinate
    Vec box0_lo, box0_hi;    // inner domain (defaults to the outer one)
    int quad_nodes = 64;
    double rel_tol = 1e-10;
    double abs_tol = 1e-10;
    std::optional<Expr> j_o;
    int grid_res = 8, fiber_res = 8, topup = 32;
    std::uint64_t seed = 0;
    std::string source_path;

    int coord_dim() const { return kind == ModelKind::Hopf ? 4 : k + 1; }

    std::vector<std::string> variables() const {
        if (kind == ModelKind::Hopf) return {"a", "b", "c", "d"};
        std::vector<std::string> v{"phi"};
        for (int i = 1; i <= k; ++i) v.push_back("x" + std::to_string(i));
        return v;
    }

    std::vector<std::string> orbit_variables() const {
        const int n = kind == ModelKind::Hopf ? 3 : k;
        std::vector<std::string> v;
        for (int i = 1; i <= n; ++i) v.push_back("x" + std::to_string(i));
        return v;
    }
};

namespace detail {

struct RawValue {
    std::vector<std::string> strings; // quoted entries or a single bare word
    std::vector<double> numbers;
    bool quoted = false;
    int line = 0;
};

inline std::string trim(std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return (a == std::string::npos) ? std::string() : s.substr(a, b - a + 1);
}

using RawConfig = std::map<std::string, std::map<std::string, RawValue>>;

inline RawConfig parse_raw_config(std::string_view text, const std::string& origin) {
    RawConfig raw;
    std::string section;
    int lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        std::string line(text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos));
        pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
        ++lineno;
        // strip comments outside quotes
        bool in_quote = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_quote = !in_quote;
            if (line[i] == '#' && !in_quote) {
                line.resize(i);
                break;
            }
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        RawValue rv;
        rv.line = lineno;
        if (!val.empty() && val.front() == '"') {
            rv.quoted = true;
            std::size_t i = 0;
            while (i < val.size()) {
                if (val[i] != '"')
                    throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected quoted string");
                const std::size_t close = val.find('"', i + 1);
                if (close == std::string::npos)
                    throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated string");
                rv.strings.push_back(val.substr(i + 1, close - i - 1));
                i = close + 1;
                while (i < val.size() && (val[i] == ' ' || val[i] == '\t')) ++i;
                if (i < val.size()) {
                    if (val[i] != ',')
                        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected ','");
                    ++i;
                    while (i < val.size() && (val[i] == ' ' || val[i] == '\t')) ++i;
                }
            }
        } else {
            std::size_t i = 0;
            while (i <= val.size()) {
                std::size_t comma = val.find(',', i);
                if (comma == std::string::npos) comma = val.size();
                const std::string item = trim(val.substr(i, comma - i));
                if (!item.empty()) {
                    try {
                        std::size_t used = 0;
                        const double d = std::stod(item, &used);
                        if (used != item.size()) throw std::invalid_argument(item);
                        rv.numbers.push_back(d);
                    } catch (const std::exception&) {
                        rv.strings.push_back(item);
                    }
                }
                i = comma + 1;
                if (comma == val.size()) break;
            }
        }
        raw[section][key] = std::move(rv);
    }
    return raw;
}

inline void check_expr_variables(const Expr& e, const std::vector<std::string>& allowed,
                                 const std::string& field, const std::string& origin) {
    std::vector<std::string> vars;
    collect_variables(e, vars);
    for (const auto& v : vars) {
        bool ok = false;
        for (const auto& a : allowed) ok = ok || a == v;
        if (!ok)
            throw ConfigError(origin + ": field '" + field + "' uses unknown variable '" + v + "'");
    }
}

} // namespace detail

inline SystemConfig parse_config(std::string_view text, const std::string& origin) {
    using detail::RawValue;
    auto raw = detail::parse_raw_config(text, origin);

    const auto get = [&](const std::string& sec, const std::string& key) -> const RawValue* {
        auto s = raw.find(sec);
        if (s == raw.end()) return nullptr;
        auto k = s->second.find(key);
        return k == s->second.end() ? nullptr : &k->second;
    };
    const auto need = [&](const std::string& sec, const std::string& key) -> const RawValue& {
        const RawValue* v = get(sec, key);
        if (!v) throw ConfigError(origin + ": missing [" + sec + "] " + key);
        return *v;
    };
    const auto one_number = [&](const RawValue& v, const std::string& what) {
        if (v.numbers.size() != 1)
            throw ConfigError(origin + ": field '" + what + "' must be a single number");
        return v.numbers[0];
    };
    const auto parse_field_exprs = [&](const RawValue& v, const std::string& what) {
        if (!v.quoted || v.strings.empty())
            throw ConfigError(origin + ": field '" + what + "' must be quoted expression(s)");
        std::vector<Expr> out;
        for (const auto& s : v.strings) {
            try {
                out.push_back(parse_expr(s));
            } catch (const Error& err) {
                throw ConfigError(origin + ": field '" + what + "': " + err.what());
            }
        }
        return out;
    };

    SystemConfig cfg;
    cfg.source_path = origin;

    const RawValue& kindv = need("model", "kind");
    const std::string kind = kindv.strings.empty() ? "" : kindv.strings[0];
    if (kind == "trivial")
        cfg.kind = ModelKind::TrivialBundle;
    else if (kind == "hopf")
        cfg.kind = ModelKind::Hopf;
    else
        throw ConfigError(origin + ": field 'kind' must be 'trivial' or 'hopf'");

    if (cfg.kind == ModelKind::TrivialBundle) {
        cfg.k = int(one_number(need("model", "k"), "k"));
        if (cfg.k < 1 || cfg.k > 7) throw ConfigError(origin + ": field 'k' must be in [1, 7]");
    } else {
        cfg.k = 0;
    }

    cfg.omega = parse_field_exprs(need("model", "omega"), "omega").at(0);
    const auto vars = cfg.variables();
    detail::check_expr_variables(cfg.omega, vars, "omega", origin);

    cfg.x1 = parse_field_exprs(need("fields", "x1"), "x1");
    if (int(cfg.x1.size()) != cfg.coord_dim())
        throw ConfigError(origin + ": field 'x1' has " + std::to_string(cfg.x1.size()) +
                          " components, model needs " + std::to_string(cfg.coord_dim()));
    for (std::size_t i = 0; i < cfg.x1.size(); ++i)
        detail::check_expr_variables(cfg.x1[i], vars, "x1[" + std::to_string(i) + "]", origin);
    if (const RawValue* v = get("fields", "x0")) {
        cfg.x0 = parse_field_exprs(*v, "x0");
        if (int(cfg.x0.size()) != cfg.coord_dim())
            throw ConfigError(origin + ": field 'x0' has " + std::to_string(cfg.x0.size()) +
                              " components, model needs " + std::to_string(cfg.coord_dim()));
        for (std::size_t i = 0; i < cfg.x0.size(); ++i)
            detail::check_expr_variables(cfg.x0[i], vars, "x0[" + std::to_string(i) + "]", origin);
    }

    const RawValue& m0v = need("initial", "m0");
    if (int(m0v.numbers.size()) != cfg.coord_dim())
        throw ConfigError(origin + ": field 'm0' needs " + std::to_string(cfg.coord_dim()) + " numbers");
    cfg.m0.resize(cfg.coord_dim());
    for (int i = 0; i < cfg.coord_dim(); ++i) cfg.m0[i] = m0v.numbers[i];
    cfg.L0 = one_number(need("initial", "L0"), "L0");
    if (!(cfg.L0 > 0.0)) throw ConfigError(origin + ": field 'L0' must be positive");

    if (const RawValue* v = get("sweep", "eps")) {
        cfg.eps = v->numbers;
    } else {
        const double emin = one_number(need("sweep", "eps_min"), "eps_min");
        const double emax = one_number(need("sweep", "eps_max"), "eps_max");
        const int n = int(one_number(need("sweep", "eps_count"), "eps_count"));
        if (!(emin > 0.0) || !(emax >= emin) || n < 1)
            throw ConfigError(origin + ": sweep needs 0 < eps_min <= eps_max and eps_count >= 1");
        for (int i = 0; i < n; ++i)
            cfg.eps.push_back(n == 1 ? emax
                                     : emax * std::pow(emin / emax, double(i) / double(n - 1)));
    }
    for (double e : cfg.eps)
        if (!(e > 0.0)) throw ConfigError(origin + ": epsilon values must be positive");
    std::sort(cfg.eps.begin(), cfg.eps.end(), std::greater<double>());
    cfg.eps0 = get("sweep", "eps0") ? one_number(*get("sweep", "eps0"), "eps0") : cfg.eps.front();

    if (cfg.kind == ModelKind::TrivialBundle) {
        const RawValue& boxv = need("domain", "box");
        if (int(boxv.numbers.size()) != 2 * cfg.k)
            throw ConfigError(origin + ": field 'box' needs " + std::to_string(2 * cfg.k) +
                              " numbers (lo, hi per base axis)");
        cfg.box_lo.resize(cfg.k);
        cfg.box_hi.resize(cfg.k);
        for (int i = 0; i < cfg.k; ++i) {
            cfg.box_lo[i] = boxv.numbers[2 * i];
            cfg.box_hi[i] = boxv.numbers[2 * i + 1];
            if (!(cfg.box_lo[i] < cfg.box_hi[i]))
                throw ConfigError(origin + ": field 'box' axis " + std::to_string(i + 1) +
                                  " must satisfy lo < hi");
        }
    } else {
        cfg.box_lo = Vec::Constant(1, -0.5);
        cfg.box_hi = Vec::Constant(1, 0.5);
        if (const RawValue* v = get("domain", "band")) {
            if (v->numbers.size() != 2)
                throw ConfigError(origin + ": field 'band' needs two numbers in [-0.5, 0.5]");
            cfg.box_lo[0] = v->numbers[0];
            cfg.box_hi[0] = v->numbers[1];
        }
    }
    cfg.box0_lo = cfg.box_lo;
    cfg.box0_hi = cfg.box_hi;
    if (const RawValue* v = get("domain", cfg.kind == ModelKind::Hopf ? "band0" : "box0")) {
        const int need_n = cfg.kind == ModelKind::Hopf ? 2 : 2 * cfg.k;
        if (int(v->numbers.size()) != need_n)
            throw ConfigError(origin + ": inner domain needs " + std::to_string(need_n) + " numbers");
        for (int i = 0; i < need_n / 2; ++i) {
            cfg.box0_lo[i] = v->numbers[2 * i];
            cfg.box0_hi[i] = v->numbers[2 * i + 1];
        }
    }

    if (const RawValue* v = get("quad", "nodes")) cfg.quad_nodes = int(one_number(*v, "nodes"));
    if (cfg.quad_nodes < 8) throw ConfigError(origin + ": field 'nodes' must be >= 8");
    if (const RawValue* v = get("tolerances", "rel_tol")) cfg.rel_tol = one_number(*v, "rel_tol");
    if (const RawValue* v = get("tolerances", "abs_tol")) cfg.abs_tol = one_number(*v, "abs_tol");
    if (!(cfg.rel_tol > 0.0) || !(cfg.abs_tol > 0.0))
        throw ConfigError(origin + ": tolerances must be positive");

    if (const RawValue* v = get("invariant", "j_o")) {
        cfg.j_o = parse_field_exprs(*v, "j_o").at(0);
        detail::check_expr_variables(*cfg.j_o, cfg.orbit_variables(), "j_o", origin);
    }

    if (const RawValue* v = get("sampler", "grid_res")) cfg.grid_res = int(one_number(*v, "grid_res"));
    if (const RawValue* v = get("sampler", "fiber_res")) cfg.fiber_res = int(one_number(*v, "fiber_res"));
    if (const RawValue* v = get("sampler", "topup")) cfg.topup = int(one_number(*v, "topup"));
    if (const RawValue* v = get("sampler", "seed")) cfg.seed = std::uint64_t(one_number(*v, "seed"));

    // omega positivity, sampled on 1000 deterministic domain points
    {
        CompiledExpr om(cfg.omega, vars);
        const int n_base = cfg.kind == ModelKind::Hopf ? 4 : cfg.k + 1;
        for (int i = 0; i < 1000; ++i) {
            auto u = halton_point(std::uint64_t(i), n_base);
            Vec c(n_base);
            if (cfg.kind == ModelKind::Hopf) {
                for (int d = 0; d < 4; ++d) c[d] = 2.0 * u[d] - 1.0;
                if (c.norm() < 1e-6) c << 1, 0, 0, 0;
                c /= c.norm();
            } else {
                c[0] = two_pi * u[0];
                for (int d = 0; d < cfg.k; ++d)
                    c[d + 1] = cfg.box_lo[d] + (cfg.box_hi[d] - cfg.box_lo[d]) * u[d + 1];
            }
            const double w = om(c.data());
            if (!(w > 1e-8)) {
                std::ostringstream os;
                os << origin << ": omega is not positive on the domain: omega = " << w << " at (";
                for (int d = 0; d < n_base; ++d) os << (d ? ", " : "") << c[d];
                os << ")";
                throw ConfigError(os.str());
            }
        }
    }
    return cfg;
}

inline SystemConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config(text, path);
}

} // namespace s1avg::dsl
