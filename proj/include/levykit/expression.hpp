#ifndef LEVYKIT_EXPRESSION_HPP
#define LEVYKIT_EXPRESSION_HPP

// Tiny arithmetic language over a single variable x, used by custom diffusion
// specs:  + - * / ^, unary minus, exp log pow sqrt, the constant pi.

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "levykit/errors.hpp"

namespace levykit {

class Expression {
public:
    Expression() = default;

    static Expression parse(const std::string& text) {
        Parser p{text, 0, {}};
        Expression e;
        e.source_ = text;
        e.root_ = p.parse_expr();
        p.skip_ws();
        if (p.pos != text.size()) p.fail("unexpected trailing input");
        e.nodes_ = std::move(p.nodes);
        return e;
    }

    double operator()(double x) const { return eval(root_, x); }

    const std::string& source() const { return source_; }

private:
    enum class Op { Num, Var, Neg, Add, Sub, Mul, Div, Pow, Exp, Log, Sqrt };

    struct Node {
        Op op;
        double value;
        int lhs;
        int rhs;
    };

    struct Parser {
        const std::string& s;
        std::size_t pos;
        std::vector<Node> nodes;

        [[noreturn]] void fail(const std::string& msg) const {
            throw ValidationError("expression '" + s + "', column " + std::to_string(pos + 1) + ": " + msg);
        }

        void skip_ws() {
            while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        }

        bool accept(char c) {
            skip_ws();
            if (pos < s.size() && s[pos] == c) {
                ++pos;
                return true;
            }
            return false;
        }

        int add(Op op, int lhs = -1, int rhs = -1, double v = 0.0) {
            nodes.push_back({op, v, lhs, rhs});
            return static_cast<int>(nodes.size()) - 1;
        }

        int parse_expr() {
            int lhs = parse_term();
            for (;;) {
                if (accept('+')) lhs = add(Op::Add, lhs, parse_term());
                else if (accept('-')) lhs = add(Op::Sub, lhs, parse_term());
                else return lhs;
            }
        }

        int parse_term() {
            int lhs = parse_unary();
            for (;;) {
                if (accept('*')) lhs = add(Op::Mul, lhs, parse_unary());
                else if (accept('/')) lhs = add(Op::Div, lhs, parse_unary());
                else return lhs;
            }
        }

        int parse_unary() {
            if (accept('-')) return add(Op::Neg, parse_unary());
            if (accept('+')) return parse_unary();
            return parse_power();
        }

        // right associative: 2^3^2 = 2^9
        int parse_power() {
            int base = parse_primary();
            if (accept('^')) return add(Op::Pow, base, parse_unary());
            return base;
        }

        int parse_primary() {
            skip_ws();
            if (pos >= s.size()) fail("unexpected end of input");
            const char c = s[pos];
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
                const char* begin = s.c_str() + pos;
                char* end = nullptr;
                const double v = std::strtod(begin, &end);
                if (end == begin) fail("bad number");
                pos += static_cast<std::size_t>(end - begin);
                return add(Op::Num, -1, -1, v);
            }
            if (std::isalpha(static_cast<unsigned char>(c))) {
                std::size_t start = pos;
                while (pos < s.size() && std::isalnum(static_cast<unsigned char>(s[pos]))) ++pos;
                const std::string name = s.substr(start, pos - start);
                if (name == "x") return add(Op::Var);
                if (name == "pi") return add(Op::Num, -1, -1, std::numbers::pi);
                Op op;
                int arity = 1;
                if (name == "exp") op = Op::Exp;
                else if (name == "log") op = Op::Log;
                else if (name == "sqrt") op = Op::Sqrt;
                else if (name == "pow") { op = Op::Pow; arity = 2; }
                else {
                    pos = start;
                    fail("unknown identifier '" + name + "'");
                }
                if (!accept('(')) fail("expected '(' after " + name);
                int a = parse_expr();
                int b = -1;
                if (arity == 2) {
                    if (!accept(',')) fail("pow takes two arguments");
                    b = parse_expr();
                }
                if (!accept(')')) fail("expected ')'");
                return add(op, a, b);
            }
            if (accept('(')) {
                int inner = parse_expr();
                if (!accept(')')) fail("expected ')'");
                return inner;
            }
            fail(std::string("unexpected character '") + c + "'");
        }
    };

    double eval(int i, double x) const {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        switch (n.op) {
            case Op::Num: return n.value;
            case Op::Var: return x;
            case Op::Neg: return -eval(n.lhs, x);
            case Op::Add: return eval(n.lhs, x) + eval(n.rhs, x);
            case Op::Sub: return eval(n.lhs, x) - eval(n.rhs, x);
            case Op::Mul: return eval(n.lhs, x) * eval(n.rhs, x);
            case Op::Div: return eval(n.lhs, x) / eval(n.rhs, x);
            case Op::Pow: return std::pow(eval(n.lhs, x), eval(n.rhs, x));
            case Op::Exp: return std::exp(eval(n.lhs, x));
            case Op::Log: return std::log(eval(n.lhs, x));
            case Op::Sqrt: return std::sqrt(eval(n.lhs, x));
        }
        return std::nan("");
    }

    std::string source_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

}  // namespace levykit

#endif  // LEVYKIT_EXPRESSION_HPP
