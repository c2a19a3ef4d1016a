#pragma once

// Arithmetic expression trees over named real variables: a recursive-descent
// parser with byte-accurate error positions, evaluation against variable
// bindings, exact symbolic differentiation, and a flat postfix compilation
// for hot evaluation loops.
//
// Grammar: binary + - * / ^, unary minus, functions ln exp sin cos sqrt,
// parentheses. Precedence: ^ binds tightest, then unary minus, then * /,
// then + -; operators of equal precedence associate left.

#include <cctype>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace benney::expr {

struct ParseError : std::runtime_error {
    std::size_t position;
    ParseError(const std::string& msg, std::size_t pos)
        : std::runtime_error(msg + " (at offset " + std::to_string(pos) + ")"), position(pos) {}
};

struct EvalError : std::runtime_error {
    std::size_t position;
    EvalError(const std::string& msg, std::size_t pos)
        : std::runtime_error(msg + " (at offset " + std::to_string(pos) + ")"), position(pos) {}
};

enum class UnaryOp { Neg, Ln, Exp, Sin, Cos, Sqrt };
enum class BinaryOp { Add, Sub, Mul, Div, Pow };

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
    enum class Kind { Constant, Variable, Unary, Binary } kind;
    double value = 0;           // Constant
    std::size_t var = 0;        // Variable: index into the variable list
    UnaryOp uop = UnaryOp::Neg;
    BinaryOp bop = BinaryOp::Add;
    NodePtr lhs, rhs;
    std::size_t pos = 0;        // source offset, for eval diagnostics
};

inline NodePtr constant(double v, std::size_t pos = 0) {
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::Constant;
    n->value = v;
    n->pos = pos;
    return n;
}

inline NodePtr variable(std::size_t idx, std::size_t pos = 0) {
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::Variable;
    n->var = idx;
    n->pos = pos;
    return n;
}

inline bool is_const(const NodePtr& n, double v) {
    return n->kind == Node::Kind::Constant && n->value == v;
}

inline NodePtr unary(UnaryOp op, NodePtr a, std::size_t pos) {
    if (op == UnaryOp::Neg && a->kind == Node::Kind::Constant) return constant(-a->value, pos);
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::Unary;
    n->uop = op;
    n->lhs = std::move(a);
    n->pos = pos;
    return n;
}

// Folds the identity cases so derivative trees stay readable; anything
// beyond constants and 0/1 identities is left untouched.
inline NodePtr binary(BinaryOp op, NodePtr a, NodePtr b, std::size_t pos) {
    const bool ca = a->kind == Node::Kind::Constant;
    const bool cb = b->kind == Node::Kind::Constant;
    switch (op) {
        case BinaryOp::Add:
            if (ca && cb) return constant(a->value + b->value, pos);
            if (is_const(a, 0)) return b;
            if (is_const(b, 0)) return a;
            break;
        case BinaryOp::Sub:
            if (ca && cb) return constant(a->value - b->value, pos);
            if (is_const(b, 0)) return a;
            break;
        case BinaryOp::Mul:
            if (ca && cb) return constant(a->value * b->value, pos);
            if (is_const(a, 0) || is_const(b, 0)) return constant(0, pos);
            if (is_const(a, 1)) return b;
            if (is_const(b, 1)) return a;
            break;
        case BinaryOp::Div:
            if (is_const(a, 0) && !is_const(b, 0)) return constant(0, pos);
            if (is_const(b, 1)) return a;
            break;
        case BinaryOp::Pow:
            if (is_const(b, 1)) return a;
            if (is_const(b, 0)) return constant(1, pos);
            break;
    }
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::Binary;
    n->bop = op;
    n->lhs = std::move(a);
    n->rhs = std::move(b);
    n->pos = pos;
    return n;
}

struct Token {
    enum class Kind { Number, Ident, LParen, RParen, Plus, Minus, Star, Slash, Caret, End } kind;
    double number = 0;
    std::string text;
    std::size_t pos = 0;
};

class Lexer {
  public:
    explicit Lexer(std::string_view src) : src_(src) { advance(); }
    const Token& peek() const { return tok_; }
    Token take() {
        Token t = tok_;
        advance();
        return t;
    }

  private:
    void advance() {
        while (i_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[i_]))) ++i_;
        tok_.pos = i_;
        if (i_ >= src_.size()) {
            tok_.kind = Token::Kind::End;
            return;
        }
        const char c = src_[i_];
        switch (c) {
            case '(': tok_.kind = Token::Kind::LParen; ++i_; return;
            case ')': tok_.kind = Token::Kind::RParen; ++i_; return;
            case '+': tok_.kind = Token::Kind::Plus; ++i_; return;
            case '-': tok_.kind = Token::Kind::Minus; ++i_; return;
            case '*': tok_.kind = Token::Kind::Star; ++i_; return;
            case '/': tok_.kind = Token::Kind::Slash; ++i_; return;
            case '^': tok_.kind = Token::Kind::Caret; ++i_; return;
            default: break;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            lex_number();
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i_;
            while (j < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[j])) || src_[j] == '_'))
                ++j;
            tok_.kind = Token::Kind::Ident;
            tok_.text.assign(src_.substr(i_, j - i_));
            i_ = j;
            return;
        }
        throw ParseError(std::string("unexpected character '") + c + "'", i_);
    }

    void lex_number() {
        std::size_t j = i_;
        bool saw_digit = false;
        while (j < src_.size() && std::isdigit(static_cast<unsigned char>(src_[j]))) {
            ++j;
            saw_digit = true;
        }
        if (j < src_.size() && src_[j] == '.') {
            ++j;
            while (j < src_.size() && std::isdigit(static_cast<unsigned char>(src_[j]))) {
                ++j;
                saw_digit = true;
            }
        }
        if (!saw_digit) throw ParseError("malformed number", i_);
        if (j < src_.size() && (src_[j] == 'e' || src_[j] == 'E')) {
            std::size_t k = j + 1;
            if (k < src_.size() && (src_[k] == '+' || src_[k] == '-')) ++k;
            if (k < src_.size() && std::isdigit(static_cast<unsigned char>(src_[k]))) {
                ++k;
                while (k < src_.size() && std::isdigit(static_cast<unsigned char>(src_[k]))) ++k;
                j = k;
            }
        }
        const std::string text(src_.substr(i_, j - i_));
        try {
            tok_.number = std::stod(text);
        } catch (const std::exception&) {
            throw ParseError("malformed number", i_);
        }
        tok_.kind = Token::Kind::Number;
        i_ = j;
    }

    std::string_view src_;
    std::size_t i_ = 0;
    Token tok_;
};

inline bool is_function_name(std::string_view s) {
    return s == "ln" || s == "exp" || s == "sin" || s == "cos" || s == "sqrt" || s == "neg";
}

inline UnaryOp function_op(std::string_view s) {
    if (s == "ln") return UnaryOp::Ln;
    if (s == "exp") return UnaryOp::Exp;
    if (s == "sin") return UnaryOp::Sin;
    if (s == "cos") return UnaryOp::Cos;
    if (s == "sqrt") return UnaryOp::Sqrt;
    return UnaryOp::Neg;
}

}  // namespace detail

/// One step of a compiled postfix program.
struct CompiledOp {
    enum class Code { PushConst, PushVar, Unary, Binary } code;
    double value = 0;
    std::size_t var = 0;
    UnaryOp uop = UnaryOp::Neg;
    BinaryOp bop = BinaryOp::Add;
    std::size_t pos = 0;
};

/// Stack-machine form of an Ast; evaluates without tree recursion.
class Compiled {
  public:
    double eval(std::span<const double> bindings) const {
        double stack[64];
        std::size_t top = 0;
        for (const auto& op : prog_) {
            switch (op.code) {
                case CompiledOp::Code::PushConst: stack[top++] = op.value; break;
                case CompiledOp::Code::PushVar: stack[top++] = bindings[op.var]; break;
                case CompiledOp::Code::Unary:
                    stack[top - 1] = apply_unary(op.uop, stack[top - 1], op.pos);
                    break;
                case CompiledOp::Code::Binary:
                    --top;
                    stack[top - 1] = apply_binary(op.bop, stack[top - 1], stack[top], op.pos);
                    break;
            }
        }
        return stack[0];
    }

    static double apply_unary(UnaryOp op, double a, std::size_t pos) {
        switch (op) {
            case UnaryOp::Neg: return -a;
            case UnaryOp::Ln:
                if (!(a > 0)) throw EvalError("ln of non-positive value", pos);
                return std::log(a);
            case UnaryOp::Exp: return std::exp(a);
            case UnaryOp::Sin: return std::sin(a);
            case UnaryOp::Cos: return std::cos(a);
            case UnaryOp::Sqrt:
                if (a < 0) throw EvalError("sqrt of negative value", pos);
                return std::sqrt(a);
        }
        return 0;
    }

    static double apply_binary(BinaryOp op, double a, double b, std::size_t pos) {
        switch (op) {
            case BinaryOp::Add: return a + b;
            case BinaryOp::Sub: return a - b;
            case BinaryOp::Mul: return a * b;
            case BinaryOp::Div:
                if (b == 0) throw EvalError("division by zero", pos);
                return a / b;
            case BinaryOp::Pow: {
                const double r = std::pow(a, b);
                if (std::isnan(r)) throw EvalError("pow outside real domain", pos);
                return r;
            }
        }
        return 0;
    }

  private:
    friend class Ast;
    std::vector<CompiledOp> prog_;
};

/// A parsed expression over a fixed, ordered variable list.
class Ast {
  public:
    /// Parses `source` against the declared variables. Every failure throws
    /// ParseError with the byte offset of the offending token.
    static Ast parse(std::string_view source, std::vector<std::string> variables) {
        bool blank = true;
        for (char c : source)
            if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
        if (blank) throw ParseError("empty expression", 0);
        Ast ast;
        ast.vars_ = std::move(variables);
        detail::Lexer lex(source);
        ast.root_ = ast.parse_sum(lex);
        const auto& t = lex.peek();
        if (t.kind != detail::Token::Kind::End)
            throw ParseError("unexpected trailing input", t.pos);
        return ast;
    }

    const std::vector<std::string>& variables() const { return vars_; }

    /// Evaluates with bindings in declaration order.
    double eval(std::span<const double> bindings) const {
        if (bindings.size() != vars_.size())
            throw EvalError("binding count does not match variable count", 0);
        return eval_node(*root_, bindings);
    }

    /// Evaluates with named bindings; every declared variable must be bound.
    double eval(const std::map<std::string, double>& bindings) const {
        std::vector<double> v(vars_.size());
        for (std::size_t i = 0; i < vars_.size(); ++i) {
            const auto it = bindings.find(vars_[i]);
            if (it == bindings.end()) throw EvalError("unbound variable '" + vars_[i] + "'", 0);
            v[i] = it->second;
        }
        return eval(v);
    }

    /// Exact derivative with respect to one declared variable.
    Ast derivative(std::string_view var) const {
        std::size_t idx = vars_.size();
        for (std::size_t i = 0; i < vars_.size(); ++i)
            if (vars_[i] == var) idx = i;
        if (idx == vars_.size())
            throw ParseError("cannot differentiate with respect to unknown variable '" +
                                 std::string(var) + "'",
                             0);
        Ast out;
        out.vars_ = vars_;
        out.root_ = diff_node(root_, idx);
        return out;
    }

    Compiled compile() const {
        Compiled c;
        compile_node(root_, c.prog_);
        return c;
    }

    std::string to_string() const { return print(root_, 0); }

  private:
    using NodePtr = detail::NodePtr;
    using Node = detail::Node;
    using Token = detail::Token;

    NodePtr parse_sum(detail::Lexer& lex) const {
        NodePtr acc = parse_product(lex);
        while (true) {
            const auto& t = lex.peek();
            if (t.kind == Token::Kind::Plus || t.kind == Token::Kind::Minus) {
                const auto op = lex.take();
                NodePtr rhs = parse_product(lex);
                acc = detail::binary(
                    op.kind == Token::Kind::Plus ? BinaryOp::Add : BinaryOp::Sub, acc, rhs, op.pos);
            } else {
                return acc;
            }
        }
    }

    NodePtr parse_product(detail::Lexer& lex) const {
        NodePtr acc = parse_unary(lex);
        while (true) {
            const auto& t = lex.peek();
            if (t.kind == Token::Kind::Star || t.kind == Token::Kind::Slash) {
                const auto op = lex.take();
                NodePtr rhs = parse_unary(lex);
                acc = detail::binary(
                    op.kind == Token::Kind::Star ? BinaryOp::Mul : BinaryOp::Div, acc, rhs, op.pos);
            } else {
                return acc;
            }
        }
    }

    NodePtr parse_unary(detail::Lexer& lex) const {
        if (lex.peek().kind == Token::Kind::Minus) {
            const auto op = lex.take();
            return detail::unary(UnaryOp::Neg, parse_unary(lex), op.pos);
        }
        return parse_power(lex);
    }

    // Exponent chains fold left: a^b^c parses as (a^b)^c. A leading minus in
    // an exponent is allowed (2^-3).
    NodePtr parse_power(detail::Lexer& lex) const {
        NodePtr acc = parse_atom(lex);
        while (lex.peek().kind == Token::Kind::Caret) {
            const auto op = lex.take();
            acc = detail::binary(BinaryOp::Pow, acc, parse_exponent(lex), op.pos);
        }
        return acc;
    }

    NodePtr parse_exponent(detail::Lexer& lex) const {
        if (lex.peek().kind == Token::Kind::Minus) {
            const auto op = lex.take();
            return detail::unary(UnaryOp::Neg, parse_exponent(lex), op.pos);
        }
        return parse_atom(lex);
    }

    NodePtr parse_atom(detail::Lexer& lex) const {
        const auto t = lex.take();
        switch (t.kind) {
            case Token::Kind::Number: return detail::constant(t.number, t.pos);
            case Token::Kind::LParen: {
                NodePtr inner = parse_sum(lex);
                const auto close = lex.take();
                if (close.kind != Token::Kind::RParen)
                    throw ParseError("expected ')'", close.pos);
                return inner;
            }
            case Token::Kind::Ident: {
                if (detail::is_function_name(t.text)) {
                    const auto open = lex.take();
                    if (open.kind != Token::Kind::LParen)
                        throw ParseError("expected '(' after function '" + t.text + "'", open.pos);
                    NodePtr arg = parse_sum(lex);
                    const auto close = lex.take();
                    if (close.kind != Token::Kind::RParen)
                        throw ParseError("expected ')'", close.pos);
                    return detail::unary(detail::function_op(t.text), arg, t.pos);
                }
                for (std::size_t i = 0; i < vars_.size(); ++i)
                    if (vars_[i] == t.text) return detail::variable(i, t.pos);
                throw ParseError("unknown variable '" + t.text + "'", t.pos);
            }
            case Token::Kind::End: throw ParseError("unexpected end of input", t.pos);
            default: throw ParseError("expected a value", t.pos);
        }
    }

    static double eval_node(const Node& n, std::span<const double> b) {
        switch (n.kind) {
            case Node::Kind::Constant: return n.value;
            case Node::Kind::Variable: return b[n.var];
            case Node::Kind::Unary:
                return Compiled::apply_unary(n.uop, eval_node(*n.lhs, b), n.pos);
            case Node::Kind::Binary:
                return Compiled::apply_binary(n.bop, eval_node(*n.lhs, b), eval_node(*n.rhs, b),
                                              n.pos);
        }
        return 0;
    }

    static NodePtr diff_node(const NodePtr& n, std::size_t var) {
        using detail::binary;
        using detail::constant;
        using detail::unary;
        const std::size_t p = n->pos;
        switch (n->kind) {
            case Node::Kind::Constant: return constant(0, p);
            case Node::Kind::Variable: return constant(n->var == var ? 1 : 0, p);
            case Node::Kind::Unary: {
                NodePtr da = diff_node(n->lhs, var);
                switch (n->uop) {
                    case UnaryOp::Neg: return unary(UnaryOp::Neg, da, p);
                    case UnaryOp::Ln: return binary(BinaryOp::Div, da, n->lhs, p);
                    case UnaryOp::Exp: return binary(BinaryOp::Mul, n, da, p);
                    case UnaryOp::Sin:
                        return binary(BinaryOp::Mul, unary(UnaryOp::Cos, n->lhs, p), da, p);
                    case UnaryOp::Cos:
                        return unary(UnaryOp::Neg,
                                     binary(BinaryOp::Mul, unary(UnaryOp::Sin, n->lhs, p), da, p),
                                     p);
                    case UnaryOp::Sqrt:
                        return binary(BinaryOp::Div, da,
                                      binary(BinaryOp::Mul, constant(2, p), n, p), p);
                }
                break;
            }
            case Node::Kind::Binary: {
                const NodePtr& a = n->lhs;
                const NodePtr& b = n->rhs;
                NodePtr da = diff_node(a, var);
                NodePtr db = diff_node(b, var);
                switch (n->bop) {
                    case BinaryOp::Add: return binary(BinaryOp::Add, da, db, p);
                    case BinaryOp::Sub: return binary(BinaryOp::Sub, da, db, p);
                    case BinaryOp::Mul:
                        return binary(BinaryOp::Add, binary(BinaryOp::Mul, da, b, p),
                                      binary(BinaryOp::Mul, a, db, p), p);
                    case BinaryOp::Div:
                        return binary(
                            BinaryOp::Div,
                            binary(BinaryOp::Sub, binary(BinaryOp::Mul, da, b, p),
                                   binary(BinaryOp::Mul, a, db, p), p),
                            binary(BinaryOp::Pow, b, constant(2, p), p), p);
                    case BinaryOp::Pow:
                        if (b->kind == Node::Kind::Constant) {
                            // d(a^c) = c * a^(c-1) * a'
                            return binary(
                                BinaryOp::Mul,
                                binary(BinaryOp::Mul, constant(b->value, p),
                                       binary(BinaryOp::Pow, a, constant(b->value - 1, p), p), p),
                                da, p);
                        }
                        if (a->kind == Node::Kind::Constant) {
                            // d(c^b) = c^b * ln(c) * b'
                            return binary(BinaryOp::Mul,
                                          binary(BinaryOp::Mul, n,
                                                 unary(UnaryOp::Ln, a, p), p),
                                          db, p);
                        }
                        // d(a^b) = a^b * (b' ln a + b a'/a)
                        return binary(
                            BinaryOp::Mul, n,
                            binary(BinaryOp::Add,
                                   binary(BinaryOp::Mul, db, unary(UnaryOp::Ln, a, p), p),
                                   binary(BinaryOp::Div, binary(BinaryOp::Mul, b, da, p), a, p),
                                   p),
                            p);
                }
                break;
            }
        }
        return constant(0, p);
    }

    static void compile_node(const NodePtr& n, std::vector<CompiledOp>& prog) {
        switch (n->kind) {
            case Node::Kind::Constant:
                prog.push_back({CompiledOp::Code::PushConst, n->value, 0, n->uop, n->bop, n->pos});
                break;
            case Node::Kind::Variable:
                prog.push_back({CompiledOp::Code::PushVar, 0, n->var, n->uop, n->bop, n->pos});
                break;
            case Node::Kind::Unary:
                compile_node(n->lhs, prog);
                prog.push_back({CompiledOp::Code::Unary, 0, 0, n->uop, n->bop, n->pos});
                break;
            case Node::Kind::Binary:
                compile_node(n->lhs, prog);
                compile_node(n->rhs, prog);
                prog.push_back({CompiledOp::Code::Binary, 0, 0, n->uop, n->bop, n->pos});
                break;
        }
        if (prog.size() > 4096) throw ParseError("expression too large to compile", 0);
    }

    std::string print(const NodePtr& n, int parent_prec) const {
        auto wrap = [&](std::string s, int prec) {
            return prec < parent_prec ? "(" + s + ")" : s;
        };
        switch (n->kind) {
            case Node::Kind::Constant: {
                std::string s = std::to_string(n->value);
                while (s.size() > 1 && s.back() == '0') s.pop_back();
                if (!s.empty() && s.back() == '.') s.pop_back();
                return n->value < 0 ? "(" + s + ")" : s;
            }
            case Node::Kind::Variable: return vars_[n->var];
            case Node::Kind::Unary: {
                static const char* names[] = {"-", "ln", "exp", "sin", "cos", "sqrt"};
                const auto idx = static_cast<int>(n->uop);
                if (n->uop == UnaryOp::Neg) return wrap("-" + print(n->lhs, 3), 3);
                return std::string(names[idx]) + "(" + print(n->lhs, 0) + ")";
            }
            case Node::Kind::Binary: {
                static const char* ops[] = {"+", "-", "*", "/", "^"};
                static const int precs[] = {1, 1, 2, 2, 4};
                const auto i = static_cast<int>(n->bop);
                return wrap(print(n->lhs, precs[i]) + ops[i] + print(n->rhs, precs[i] + 1),
                            precs[i]);
            }
        }
        return "";
    }

    NodePtr root_;
    std::vector<std::string> vars_;
};

}  // namespace benney::expr
