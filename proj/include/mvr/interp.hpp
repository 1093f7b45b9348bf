#pragma once

#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvr/dsl.hpp"

namespace mvr::interp {

struct Value {
    enum class Tag { Bool, Text, Int, Image };

    Tag tag = Tag::Bool;
    bool b = false;
    long long i = 0;
    std::string s;  // Text content or image reference

    static Value boolean(bool v);
    static Value text(std::string v);
    static Value integer(long long v);
    static Value image(std::string ref);

    bool operator==(const Value&) const = default;
};

std::string value_repr(const Value& v);

class ExecError : public std::runtime_error {
public:
    enum class Kind {
        UnknownOp,
        TypeMismatch,
        BackendFailure,
        NonBooleanResult,
        UnboundVariable,
        EmptyAnswer,
        BadArgs,
    };

    ExecError(Kind kind, const std::string& message);

    Kind kind;
};

const char* exec_error_kind_name(ExecError::Kind k);

// Insert-only variable bindings for one execution.
class Environment {
public:
    void bind(const std::string& name, Value v);  // rebind is a logic error
    const Value* find(const std::string& name) const;
    const std::map<std::string, Value>& bindings() const { return bindings_; }

private:
    std::map<std::string, Value> bindings_;
};

struct VqaRequest {
    std::string image_ref;
    std::string question;
};

// Answers a natural-language question about a single image; raw reply text.
using VqaBackendFn = std::function<std::string(const VqaRequest&)>;

struct StmtTrace {
    std::string statement_text;
    std::vector<std::pair<std::string, std::string>> resolved_args;
    std::optional<VqaRequest> request;
    std::optional<std::string> raw_reply;
    std::optional<Value> value;
    std::optional<std::string> error;
};

struct ExecutionTrace {
    std::vector<StmtTrace> records;  // one per executed statement, in order
    std::optional<bool> verdict;
};

// Audit form: one line-delimited record per statement.
std::string trace_to_jsonl(const ExecutionTrace& t);

struct ModuleRegistry {
    using Executor = std::function<Value(const dsl::Stmt&, const Environment&, StmtTrace&)>;

    std::map<std::string, Executor> ops;

    // VQA, EVAL, RESULT.
    static ModuleRegistry core(VqaBackendFn vqa);
};

struct ExecutionResult {
    bool ok = false;
    bool verdict = false;
    ExecutionTrace trace;
    std::string error_kind;
    std::string error_message;
};

// Runs statements in order against an environment seeded with LEFT/RIGHT.
// Never throws; failures are reported in the result with the trace ending at
// the failing statement.
ExecutionResult execute(const dsl::Program& p, const std::string& left_image,
                        const std::string& right_image, const ModuleRegistry& registry);

// == / != on same-tag operands only; and/or short-circuit; not requires Bool.
Value eval_expr(const dsl::Expr& e, const Environment& env);

// Trim, strip terminal punctuation, lowercase; yes/no -> Bool, digits -> Int,
// otherwise Text.
Value coerce_vqa_answer(const std::string& raw);

}  // namespace mvr::interp
