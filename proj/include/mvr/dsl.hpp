#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace mvr::dsl {

// Boolean expression sub-language used by EVAL.
// Precedence, loosest to tightest: or, and, not, == / !=.
struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

enum class BinOp { Eq, Ne, And, Or };

struct Expr {
    struct BoolLit { bool value; };
    struct IntLit { long long value; };
    struct StrLit { std::string value; };
    struct Var { std::string name; };
    struct Not { ExprPtr operand; };
    struct Binary { BinOp op; ExprPtr lhs, rhs; };

    std::variant<BoolLit, IntLit, StrLit, Var, Not, Binary> node;
};

ExprPtr make_bool(bool v);
ExprPtr make_int(long long v);
ExprPtr make_str(std::string v);
ExprPtr make_var(std::string name);
ExprPtr make_not(ExprPtr operand);
ExprPtr make_binary(BinOp op, ExprPtr lhs, ExprPtr rhs);

bool expr_equal(const Expr& a, const Expr& b);

// One statement argument: name=value pairs everywhere except EVAL's single
// positional expression.
struct Arg {
    enum class Kind { Str, Var, Bool, Int, Expr };

    Kind kind = Kind::Str;
    std::string text;        // Str (inner text, quotes stripped) or Var name
    bool bool_value = false;
    long long int_value = 0;
    ExprPtr expr;

    static Arg str(std::string s);
    static Arg var(std::string name);
    static Arg boolean(bool v);
    static Arg integer(long long v);
    static Arg expression(ExprPtr e);
};

bool arg_equal(const Arg& a, const Arg& b);

struct Stmt {
    std::string target;
    std::string op_name;
    std::vector<std::pair<std::string, Arg>> args;  // positional arg has empty name

    const Arg* find_arg(const std::string& name) const;
};

struct Program {
    std::vector<Stmt> statements;
};

bool stmt_equal(const Stmt& a, const Stmt& b);
bool program_equal(const Program& a, const Program& b);

class ParseError : public std::runtime_error {
public:
    enum class Kind { Syntax, MissingResult, Reassignment, UseBeforeAssign };

    ParseError(Kind kind, int line, int column, const std::string& message);

    Kind kind;
    int line;    // 1-based
    int column;  // 1-based
};

// One statement per nonblank line; last statement must be RESULT; straight-line
// single-assignment with LEFT/RIGHT as seed bindings.
Program parse_program(const std::string& source);

Expr parse_expr(const std::string& source);

// Canonical text form; parse_program(render_program(p)) is structurally equal
// to p for any valid program.
std::string render_program(const Program& p);
std::string render_stmt(const Stmt& s);
std::string render_expr(const Expr& e);

}  // namespace mvr::dsl
