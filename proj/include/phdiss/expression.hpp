/*
 Copyright 2026 The phdiss Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#ifndef PHDISS_EXPRESSION_HPP
#define PHDISS_EXPRESSION_HPP

// Scalar expressions over the state variables x1..xn.
//
// Grammar (lowest to highest precedence):
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := primary ('^' unary)?            right associative
//   primary := number | 'x' digits | func '(' expr ')' | 'norm2' '(' 'x' ')' | '(' expr ')'
//
// norm2(x) is the squared Euclidean norm of the whole state. Whitelisted
// functions: sqrt, exp, log, sin, cos.

#include <cctype>
#include <charconv>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "phdiss/errors.hpp"

namespace phdiss {

class Expression {
public:
    enum class Op : unsigned char { Number, Variable, Norm2, Neg, Add, Sub, Mul, Div, Pow, Sqrt, Exp, Log, Sin, Cos };

    struct Node {
        Op op = Op::Number;
        double value = 0.0;  // Number
        int index = -1;      // Variable, zero-based
        int lhs = -1;
        int rhs = -1;
        bool operator==(const Node&) const = default;
    };

    Expression() : Expression(constant(0.0)) {}

    static Expression constant(double v) {
        Expression e(0);
        e.nodes_.push_back(Node{Op::Number, v, -1, -1, -1});
        return e;
    }

    static Expression variable(int zero_based_index) {
        Expression e(0);
        e.nodes_.push_back(Node{Op::Variable, 0.0, zero_based_index, -1, -1});
        return e;
    }

    static Expression norm2() {
        Expression e(0);
        e.nodes_.push_back(Node{Op::Norm2, 0.0, -1, -1, -1});
        return e;
    }

    static Expression unary(Op op, const Expression& a) {
        Expression e(0);
        e.nodes_ = a.nodes_;
        e.nodes_.push_back(Node{op, 0.0, -1, a.root(), -1});
        return e;
    }

    static Expression binary(Op op, const Expression& a, const Expression& b) {
        Expression e(0);
        e.nodes_.reserve(a.nodes_.size() + b.nodes_.size() + 1);
        e.nodes_ = a.nodes_;
        const int offset = static_cast<int>(a.nodes_.size());
        for (Node n : b.nodes_) {
            if (n.lhs >= 0) n.lhs += offset;
            if (n.rhs >= 0) n.rhs += offset;
            e.nodes_.push_back(n);
        }
        e.nodes_.push_back(Node{op, 0.0, -1, a.root(), b.root() + offset});
        return e;
    }

    bool is_constant() const {
        for (const Node& n : nodes_) {
            if (n.op == Op::Variable || n.op == Op::Norm2) return false;
        }
        return true;
    }

    bool is_number() const { return nodes_.size() == 1 && nodes_.front().op == Op::Number; }
    bool is_number(double v) const { return is_number() && nodes_.front().value == v; }
    double number() const { return nodes_.front().value; }

    /// Largest referenced zero-based variable index, or -1. norm2 counts as
    /// referencing no particular variable.
    int max_variable() const {
        int m = -1;
        for (const Node& n : nodes_) {
            if (n.op == Op::Variable) m = std::max(m, n.index);
        }
        return m;
    }

    double evaluate(std::span<const double> x) const { return eval(root(), x); }

    /// Symbolic partial derivative with respect to the zero-based variable.
    Expression derivative(int var) const { return diff(root(), var); }

    std::string to_string() const { return print(root(), 0); }

    bool operator==(const Expression& other) const { return nodes_ == other.nodes_; }

    const std::vector<Node>& nodes() const noexcept { return nodes_; }

private:
    explicit Expression(int) {}

    int root() const { return static_cast<int>(nodes_.size()) - 1; }

    Expression subtree(int i) const {
        // Nodes are stored in post-order, so a subtree is a contiguous range
        // ending at i. Find its first node by walking leftmost descendants.
        int first = i;
        for (;;) {
            const Node& n = nodes_[static_cast<std::size_t>(first)];
            if (n.lhs < 0) break;
            first = n.lhs;
        }
        Expression e(0);
        e.nodes_.assign(nodes_.begin() + first, nodes_.begin() + i + 1);
        for (Node& n : e.nodes_) {
            if (n.lhs >= 0) n.lhs -= first;
            if (n.rhs >= 0) n.rhs -= first;
        }
        return e;
    }

    static void fail_eval(const std::string& msg) { throw Error(ErrorCode::EvaluationError, msg); }

    double eval(int i, std::span<const double> x) const {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        switch (n.op) {
        case Op::Number: return n.value;
        case Op::Variable:
            if (n.index >= static_cast<int>(x.size())) {
                fail_eval("variable x" + std::to_string(n.index + 1) + " outside state of dimension " +
                          std::to_string(x.size()));
            }
            return x[static_cast<std::size_t>(n.index)];
        case Op::Norm2: {
            double s = 0.0;
            for (double v : x) s += v * v;
            return s;
        }
        case Op::Neg: return -eval(n.lhs, x);
        case Op::Add: return eval(n.lhs, x) + eval(n.rhs, x);
        case Op::Sub: return eval(n.lhs, x) - eval(n.rhs, x);
        case Op::Mul: return eval(n.lhs, x) * eval(n.rhs, x);
        case Op::Div: {
            const double num = eval(n.lhs, x);
            const double den = eval(n.rhs, x);
            if (den == 0.0) fail_eval("division by zero");
            return num / den;
        }
        case Op::Pow: {
            const double base = eval(n.lhs, x);
            const double ex = eval(n.rhs, x);
            const double r = std::pow(base, ex);
            if (!std::isfinite(r) && std::isfinite(base) && std::isfinite(ex)) {
                fail_eval("power " + std::to_string(base) + "^" + std::to_string(ex) + " is undefined");
            }
            return r;
        }
        case Op::Sqrt: {
            const double a = eval(n.lhs, x);
            if (a < 0.0) fail_eval("sqrt of negative value");
            return std::sqrt(a);
        }
        case Op::Exp: return std::exp(eval(n.lhs, x));
        case Op::Log: {
            const double a = eval(n.lhs, x);
            if (a <= 0.0) fail_eval("log of non-positive value");
            return std::log(a);
        }
        case Op::Sin: return std::sin(eval(n.lhs, x));
        case Op::Cos: return std::cos(eval(n.lhs, x));
        }
        return 0.0;
    }

    // Simplifying constructors used by the differentiator.
    static Expression add(const Expression& a, const Expression& b) {
        if (a.is_number() && b.is_number()) return constant(a.number() + b.number());
        if (a.is_number(0.0)) return b;
        if (b.is_number(0.0)) return a;
        return binary(Op::Add, a, b);
    }
    static Expression sub(const Expression& a, const Expression& b) {
        if (a.is_number() && b.is_number()) return constant(a.number() - b.number());
        if (b.is_number(0.0)) return a;
        if (a.is_number(0.0)) return neg(b);
        return binary(Op::Sub, a, b);
    }
    static Expression mul(const Expression& a, const Expression& b) {
        if (a.is_number() && b.is_number()) return constant(a.number() * b.number());
        if (a.is_number(0.0) || b.is_number(0.0)) return constant(0.0);
        if (a.is_number(1.0)) return b;
        if (b.is_number(1.0)) return a;
        return binary(Op::Mul, a, b);
    }
    static Expression div(const Expression& a, const Expression& b) {
        if (a.is_number(0.0)) return constant(0.0);
        if (b.is_number(1.0)) return a;
        return binary(Op::Div, a, b);
    }
    static Expression neg(const Expression& a) {
        if (a.is_number()) return constant(-a.number());
        return unary(Op::Neg, a);
    }
    static Expression pow(const Expression& a, const Expression& b) {
        if (b.is_number(1.0)) return a;
        if (b.is_number(0.0)) return constant(1.0);
        return binary(Op::Pow, a, b);
    }

    Expression diff(int i, int var) const {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        switch (n.op) {
        case Op::Number: return constant(0.0);
        case Op::Variable: return constant(n.index == var ? 1.0 : 0.0);
        case Op::Norm2: return mul(constant(2.0), variable(var));
        case Op::Neg: return neg(diff(n.lhs, var));
        case Op::Add: return add(diff(n.lhs, var), diff(n.rhs, var));
        case Op::Sub: return sub(diff(n.lhs, var), diff(n.rhs, var));
        case Op::Mul: {
            const Expression a = subtree(n.lhs), b = subtree(n.rhs);
            return add(mul(diff(n.lhs, var), b), mul(a, diff(n.rhs, var)));
        }
        case Op::Div: {
            const Expression a = subtree(n.lhs), b = subtree(n.rhs);
            const Expression num = sub(mul(diff(n.lhs, var), b), mul(a, diff(n.rhs, var)));
            return div(num, mul(b, b));
        }
        case Op::Pow: {
            const Expression a = subtree(n.lhs), b = subtree(n.rhs);
            const Expression da = diff(n.lhs, var);
            if (b.is_constant()) {
                if (b.is_number()) {
                    return mul(mul(b, pow(a, constant(b.number() - 1.0))), da);
                }
                return mul(mul(b, pow(a, sub(b, constant(1.0)))), da);
            }
            // d(a^b) = a^b (b' log a + b a' / a)
            const Expression db = diff(n.rhs, var);
            const Expression inner = add(mul(db, unary(Op::Log, a)), div(mul(b, da), a));
            return mul(subtree(i), inner);
        }
        case Op::Sqrt: return div(diff(n.lhs, var), mul(constant(2.0), subtree(i)));
        case Op::Exp: return mul(subtree(i), diff(n.lhs, var));
        case Op::Log: return div(diff(n.lhs, var), subtree(n.lhs));
        case Op::Sin: return mul(unary(Op::Cos, subtree(n.lhs)), diff(n.lhs, var));
        case Op::Cos: return neg(mul(unary(Op::Sin, subtree(n.lhs)), diff(n.lhs, var)));
        }
        return constant(0.0);
    }

    static int precedence(const Node& n) {
        switch (n.op) {
        case Op::Add:
        case Op::Sub: return 1;
        case Op::Mul:
        case Op::Div: return 2;
        case Op::Neg: return 3;
        case Op::Pow: return 4;
        case Op::Number: return n.value < 0.0 ? 3 : 5;
        default: return 5;
        }
    }

    static std::string format_number(double v) {
        char buf[64];
        const auto res = std::to_chars(buf, buf + sizeof(buf), v);
        return std::string(buf, res.ptr);
    }

    static const char* function_name(Op op) {
        switch (op) {
        case Op::Sqrt: return "sqrt";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Sin: return "sin";
        case Op::Cos: return "cos";
        default: return "";
        }
    }

    std::string print(int i, int min_prec) const {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        std::string s;
        switch (n.op) {
        case Op::Number: s = format_number(n.value); break;
        case Op::Variable: s = "x" + std::to_string(n.index + 1); break;
        case Op::Norm2: s = "norm2(x)"; break;
        case Op::Neg: s = "-" + print(n.lhs, 3); break;
        case Op::Add: s = print(n.lhs, 1) + " + " + print(n.rhs, 2); break;
        case Op::Sub: s = print(n.lhs, 1) + " - " + print(n.rhs, 2); break;
        case Op::Mul: s = print(n.lhs, 2) + "*" + print(n.rhs, 3); break;
        case Op::Div: s = print(n.lhs, 2) + "/" + print(n.rhs, 3); break;
        case Op::Pow: s = print(n.lhs, 5) + "^" + print(n.rhs, 3); break;
        default: s = std::string(function_name(n.op)) + "(" + print(n.lhs, 0) + ")"; break;
        }
        if (precedence(n) < min_prec) return "(" + s + ")";
        return s;
    }

    std::vector<Node> nodes_;

    friend class ExpressionParser;
};

/// Recursive-descent parser producing Expression trees. `n_vars` bounds the
/// admissible variable names (x1..xn); 0 accepts any positive index.
class ExpressionParser {
public:
    ExpressionParser(std::string_view text, int n_vars) : text_(text), n_vars_(n_vars) {}

    Expression parse() {
        skip_ws();
        if (pos_ >= text_.size()) throw SyntaxError(pos_, "expression", "empty input");
        Expression e = parse_expr();
        skip_ws();
        if (pos_ < text_.size()) {
            throw SyntaxError(pos_, "operator or end of input",
                              "unexpected character '" + std::string(1, text_[pos_]) + "'");
        }
        return e;
    }

private:
    using Op = Expression::Op;

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) {
            throw SyntaxError(pos_, std::string("'") + c + "'",
                              pos_ < text_.size() ? "unexpected character '" + std::string(1, text_[pos_]) + "'"
                                                  : "unexpected end of input");
        }
    }

    Expression parse_expr() {
        Expression lhs = parse_term();
        for (;;) {
            if (accept('+')) {
                lhs = Expression::binary(Op::Add, lhs, parse_term());
            } else if (accept('-')) {
                lhs = Expression::binary(Op::Sub, lhs, parse_term());
            } else {
                return lhs;
            }
        }
    }

    Expression parse_term() {
        Expression lhs = parse_unary();
        for (;;) {
            if (accept('*')) {
                lhs = Expression::binary(Op::Mul, lhs, parse_unary());
            } else if (accept('/')) {
                lhs = Expression::binary(Op::Div, lhs, parse_unary());
            } else {
                return lhs;
            }
        }
    }

    Expression parse_unary() {
        if (accept('-')) return Expression::unary(Op::Neg, parse_unary());
        if (accept('+')) return parse_unary();
        return parse_power();
    }

    Expression parse_power() {
        Expression base = parse_primary();
        if (accept('^')) return Expression::binary(Op::Pow, base, parse_unary());
        return base;
    }

    Expression parse_primary() {
        skip_ws();
        if (pos_ >= text_.size()) throw SyntaxError(pos_, "number, variable, function or '('", "unexpected end of input");
        const char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            Expression e = parse_expr();
            expect(')');
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c))) return parse_identifier();
        throw SyntaxError(pos_, "number, variable, function or '('",
                          "unexpected character '" + std::string(1, c) + "'");
    }

    Expression parse_number() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.')) ++pos_;
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            std::size_t p = pos_ + 1;
            if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) ++p;
            if (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
                pos_ = p;
                while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            }
        }
        double v = 0.0;
        const auto res = std::from_chars(text_.data() + start, text_.data() + pos_, v);
        if (res.ec != std::errc() || res.ptr != text_.data() + pos_) {
            throw SyntaxError(start, "number", "malformed number '" + std::string(text_.substr(start, pos_ - start)) + "'");
        }
        return Expression::constant(v);
    }

    Expression parse_identifier() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() && std::isalnum(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        const std::string_view name = text_.substr(start, pos_ - start);
        if (name.size() > 1 && name[0] == 'x' && all_digits(name.substr(1))) {
            int idx = 0;
            std::from_chars(name.data() + 1, name.data() + name.size(), idx);
            if (idx < 1 || (n_vars_ > 0 && idx > n_vars_)) {
                throw Error(ErrorCode::UnknownIdentifier,
                            "'" + std::string(name) + "' at position " + std::to_string(start) +
                                (n_vars_ > 0 ? " (variables are x1..x" + std::to_string(n_vars_) + ")"
                                             : " (variables are 1-based)"));
            }
            return Expression::variable(idx - 1);
        }
        if (name == "norm2") {
            expect('(');
            skip_ws();
            if (pos_ >= text_.size() || text_[pos_] != 'x' ||
                (pos_ + 1 < text_.size() && std::isalnum(static_cast<unsigned char>(text_[pos_ + 1])))) {
                throw SyntaxError(pos_, "'x'", "norm2 takes the state vector x");
            }
            ++pos_;
            expect(')');
            return Expression::norm2();
        }
        Op op;
        if (name == "sqrt") op = Op::Sqrt;
        else if (name == "exp") op = Op::Exp;
        else if (name == "log") op = Op::Log;
        else if (name == "sin") op = Op::Sin;
        else if (name == "cos") op = Op::Cos;
        else {
            throw Error(ErrorCode::UnknownIdentifier,
                        "'" + std::string(name) + "' at position " + std::to_string(start));
        }
        expect('(');
        Expression arg = parse_expr();
        expect(')');
        return Expression::unary(op, arg);
    }

    static bool all_digits(std::string_view s) {
        if (s.empty()) return false;
        for (char c : s) {
            if (!std::isdigit(static_cast<unsigned char>(c))) return false;
        }
        return true;
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    int n_vars_;
};

inline Expression parse_expression(std::string_view text, int n_vars = 0) {
    return ExpressionParser(text, n_vars).parse();
}

}  // namespace phdiss

#endif  // PHDISS_EXPRESSION_HPP
