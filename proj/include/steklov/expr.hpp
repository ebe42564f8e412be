#pragma once

// Small expression language for Y-periodic scalar coefficient fields.
// Grammar (see docs/expression-language.md):
//   expr    := term (('+' | '-') term)*
//   term    := factor (('*' | '/') factor)*
//   factor  := '-' factor | primary
//   primary := NUMBER | 'pi' | 'y1' | 'y2'
//            | ('sin'|'cos'|'exp'|'abs') '(' expr ')'
//            | ('min'|'max') '(' expr ',' expr ')'
//            | '(' expr ')'

#include <cctype>
#include <cstdlib>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "steklov/common.hpp"

namespace steklov {

/// Parse failure; `offset` is the byte position in the input text.
class expr_error : public config_error {
public:
    expr_error(const std::string& what, std::size_t offset)
        : config_error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

/// Immutable expression AST over (y1, y2). Safe to share across threads.
class Expr {
    enum class Op {
        literal,
        var_y1,
        var_y2,
        neg,
        sin_,
        cos_,
        exp_,
        abs_,
        add,
        sub,
        mul,
        div_,
        min_,
        max_
    };

    struct Node;
    using NodePtr = std::shared_ptr<const Node>;

    struct Node {
        Op op;
        double value = 0.0; // literal payload
        NodePtr lhs;
        NodePtr rhs;
    };

public:
    Expr() = default;

    static Expr parse(std::string_view text) {
        if (text.empty()) throw expr_error("empty expression", 0);
        Parser p{text, 0};
        NodePtr root = p.parse_expr();
        p.skip_ws();
        if (p.pos != text.size()) throw expr_error("unexpected trailing input", p.pos);
        return Expr(std::move(root));
    }

    static Expr literal(double v) {
        return Expr(std::make_shared<Node>(Node{Op::literal, v, nullptr, nullptr}));
    }

    bool valid() const { return root_ != nullptr; }

    double eval(Vec2 y) const { return eval_node(*root_, y); }
    double eval(double y1, double y2) const { return eval(Vec2{y1, y2}); }

    std::string to_string() const { return print_node(*root_, 0); }

    /// True iff the values on opposite faces of the unit cell agree to `tol`
    /// at `n_samples` uniformly spaced parameters including the endpoints.
    bool periodic_on_unit_cell(int n_samples, double tol) const {
        if (n_samples < 4) throw config_error("periodicity check needs n_samples >= 4");
        for (int i = 0; i < n_samples; ++i) {
            const double t = static_cast<double>(i) / (n_samples - 1);
            if (std::abs(eval(0.0, t) - eval(1.0, t)) > tol) return false;
            if (std::abs(eval(t, 0.0) - eval(t, 1.0)) > tol) return false;
        }
        return true;
    }

private:
    explicit Expr(NodePtr root) : root_(std::move(root)) {}

    static double eval_node(const Node& n, Vec2 y) {
        switch (n.op) {
        case Op::literal: return n.value;
        case Op::var_y1: return y.x;
        case Op::var_y2: return y.y;
        case Op::neg: return -eval_node(*n.lhs, y);
        case Op::sin_: return std::sin(eval_node(*n.lhs, y));
        case Op::cos_: return std::cos(eval_node(*n.lhs, y));
        case Op::exp_: return std::exp(eval_node(*n.lhs, y));
        case Op::abs_: return std::abs(eval_node(*n.lhs, y));
        case Op::add: return eval_node(*n.lhs, y) + eval_node(*n.rhs, y);
        case Op::sub: return eval_node(*n.lhs, y) - eval_node(*n.rhs, y);
        case Op::mul: return eval_node(*n.lhs, y) * eval_node(*n.rhs, y);
        case Op::div_: {
            const double num = eval_node(*n.lhs, y);
            const double den = eval_node(*n.rhs, y);
            if (std::abs(den) < 1e-300)
                throw numeric_error("division by near-zero value in expression");
            return num / den;
        }
        case Op::min_: return std::min(eval_node(*n.lhs, y), eval_node(*n.rhs, y));
        case Op::max_: return std::max(eval_node(*n.lhs, y), eval_node(*n.rhs, y));
        }
        throw numeric_error("corrupt expression node");
    }

    // Precedence levels: 0 additive, 1 multiplicative, 2 unary/primary.
    static int precedence(Op op) {
        switch (op) {
        case Op::add:
        case Op::sub: return 0;
        case Op::mul:
        case Op::div_: return 1;
        default: return 2;
        }
    }

    static std::string print_node(const Node& n, int parent_prec) {
        std::string s;
        switch (n.op) {
        case Op::literal: s = fmt_g17(n.value); break;
        case Op::var_y1: s = "y1"; break;
        case Op::var_y2: s = "y2"; break;
        case Op::neg: s = "-" + print_node(*n.lhs, 2); break;
        case Op::sin_: s = "sin(" + print_node(*n.lhs, 0) + ")"; break;
        case Op::cos_: s = "cos(" + print_node(*n.lhs, 0) + ")"; break;
        case Op::exp_: s = "exp(" + print_node(*n.lhs, 0) + ")"; break;
        case Op::abs_: s = "abs(" + print_node(*n.lhs, 0) + ")"; break;
        case Op::add:
            s = print_node(*n.lhs, 0) + " + " + print_node(*n.rhs, 1);
            break;
        case Op::sub:
            // right operand needs the higher context so "a - (b - c)" keeps parens
            s = print_node(*n.lhs, 0) + " - " + print_node(*n.rhs, 1);
            break;
        case Op::mul:
            s = print_node(*n.lhs, 1) + "*" + print_node(*n.rhs, 2);
            break;
        case Op::div_:
            s = print_node(*n.lhs, 1) + "/" + print_node(*n.rhs, 2);
            break;
        case Op::min_:
            s = "min(" + print_node(*n.lhs, 0) + ", " + print_node(*n.rhs, 0) + ")";
            break;
        case Op::max_:
            s = "max(" + print_node(*n.lhs, 0) + ", " + print_node(*n.rhs, 0) + ")";
            break;
        }
        const int prec = precedence(n.op);
        if (prec < 2 && prec < parent_prec) return "(" + s + ")";
        if ((n.op == Op::literal && n.value < 0) && parent_prec == 2) return "(" + s + ")";
        return s;
    }

    struct Parser {
        std::string_view text;
        std::size_t pos;

        void skip_ws() {
            while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
        }

        bool eat(char c) {
            skip_ws();
            if (pos < text.size() && text[pos] == c) {
                ++pos;
                return true;
            }
            return false;
        }

        NodePtr parse_expr() {
            NodePtr lhs = parse_term();
            for (;;) {
                skip_ws();
                if (eat('+')) {
                    lhs = std::make_shared<Node>(Node{Op::add, 0.0, lhs, parse_term()});
                } else if (eat('-')) {
                    lhs = std::make_shared<Node>(Node{Op::sub, 0.0, lhs, parse_term()});
                } else {
                    return lhs;
                }
            }
        }

        NodePtr parse_term() {
            NodePtr lhs = parse_factor();
            for (;;) {
                skip_ws();
                if (eat('*')) {
                    lhs = std::make_shared<Node>(Node{Op::mul, 0.0, lhs, parse_factor()});
                } else if (eat('/')) {
                    lhs = std::make_shared<Node>(Node{Op::div_, 0.0, lhs, parse_factor()});
                } else {
                    return lhs;
                }
            }
        }

        NodePtr parse_factor() {
            skip_ws();
            if (eat('-'))
                return std::make_shared<Node>(Node{Op::neg, 0.0, parse_factor(), nullptr});
            return parse_primary();
        }

        NodePtr parse_primary() {
            skip_ws();
            if (pos >= text.size()) throw expr_error("expected operand", pos);
            const char c = text[pos];
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
            if (std::isalpha(static_cast<unsigned char>(c))) return parse_identifier();
            if (c == '(') {
                ++pos;
                NodePtr inner = parse_expr();
                if (!eat(')')) throw expr_error("expected ')'", pos);
                return inner;
            }
            throw expr_error(std::string("unexpected character '") + c + "'", pos);
        }

        NodePtr parse_number() {
            const char* begin = text.data() + pos;
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            if (end == begin) throw expr_error("malformed number", pos);
            // strtod accepts leading +/- and inf/nan; the grammar reached here only
            // via digit or '.', so the token is a plain decimal literal.
            pos += static_cast<std::size_t>(end - begin);
            return std::make_shared<Node>(Node{Op::literal, v, nullptr, nullptr});
        }

        NodePtr parse_identifier() {
            const std::size_t start = pos;
            while (pos < text.size() &&
                   (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
                ++pos;
            const std::string_view id = text.substr(start, pos - start);
            if (id == "y1") return std::make_shared<Node>(Node{Op::var_y1, 0.0, nullptr, nullptr});
            if (id == "y2") return std::make_shared<Node>(Node{Op::var_y2, 0.0, nullptr, nullptr});
            if (id == "pi") return std::make_shared<Node>(Node{Op::literal, kPi, nullptr, nullptr});
            if (id == "sin" || id == "cos" || id == "exp" || id == "abs") {
                Op op = id == "sin"   ? Op::sin_
                        : id == "cos" ? Op::cos_
                        : id == "exp" ? Op::exp_
                                      : Op::abs_;
                if (!eat('(')) throw expr_error("expected '(' after function name", pos);
                NodePtr arg = parse_expr();
                if (!eat(')')) throw expr_error("expected ')'", pos);
                return std::make_shared<Node>(Node{op, 0.0, arg, nullptr});
            }
            if (id == "min" || id == "max") {
                Op op = id == "min" ? Op::min_ : Op::max_;
                if (!eat('(')) throw expr_error("expected '(' after function name", pos);
                NodePtr a = parse_expr();
                if (!eat(',')) throw expr_error("expected ',' between arguments", pos);
                NodePtr b = parse_expr();
                if (!eat(')')) throw expr_error("expected ')'", pos);
                return std::make_shared<Node>(Node{op, 0.0, a, b});
            }
            throw expr_error("unknown identifier '" + std::string(id) + "'", start);
        }
    };

    NodePtr root_;
};

} // namespace steklov
