#include "mvr/interp.hpp"

#include <algorithm>
#include <cctype>

#include <nlohmann/json.hpp>

namespace mvr::interp {

using nlohmann::json;

Value Value::boolean(bool v) { Value x; x.tag = Tag::Bool; x.b = v; return x; }
Value Value::text(std::string v) { Value x; x.tag = Tag::Text; x.s = std::move(v); return x; }
Value Value::integer(long long v) { Value x; x.tag = Tag::Int; x.i = v; return x; }
Value Value::image(std::string ref) { Value x; x.tag = Tag::Image; x.s = std::move(ref); return x; }

std::string value_repr(const Value& v) {
    switch (v.tag) {
        case Value::Tag::Bool: return v.b ? "True" : "False";
        case Value::Tag::Int: return std::to_string(v.i);
        case Value::Tag::Text: return "'" + v.s + "'";
        case Value::Tag::Image: return "image:" + v.s;
    }
    return "";
}

static const char* tag_name(Value::Tag t) {
    switch (t) {
        case Value::Tag::Bool: return "Bool";
        case Value::Tag::Int: return "Int";
        case Value::Tag::Text: return "Text";
        case Value::Tag::Image: return "Image";
    }
    return "";
}

ExecError::ExecError(Kind k, const std::string& message) : std::runtime_error(message), kind(k) {}

const char* exec_error_kind_name(ExecError::Kind k) {
    switch (k) {
        case ExecError::Kind::UnknownOp: return "UnknownOp";
        case ExecError::Kind::TypeMismatch: return "TypeMismatch";
        case ExecError::Kind::BackendFailure: return "BackendFailure";
        case ExecError::Kind::NonBooleanResult: return "NonBooleanResult";
        case ExecError::Kind::UnboundVariable: return "UnboundVariable";
        case ExecError::Kind::EmptyAnswer: return "EmptyAnswer";
        case ExecError::Kind::BadArgs: return "BadArgs";
    }
    return "";
}

void Environment::bind(const std::string& name, Value v) {
    auto [it, inserted] = bindings_.emplace(name, std::move(v));
    if (!inserted) throw std::logic_error("rebind of " + name);
}

const Value* Environment::find(const std::string& name) const {
    auto it = bindings_.find(name);
    return it == bindings_.end() ? nullptr : &it->second;
}

Value eval_expr(const dsl::Expr& e, const Environment& env) {
    using dsl::Expr;
    if (auto* b = std::get_if<Expr::BoolLit>(&e.node)) return Value::boolean(b->value);
    if (auto* i = std::get_if<Expr::IntLit>(&e.node)) return Value::integer(i->value);
    if (auto* s = std::get_if<Expr::StrLit>(&e.node)) return Value::text(s->value);
    if (auto* v = std::get_if<Expr::Var>(&e.node)) {
        const Value* bound = env.find(v->name);
        if (!bound)
            throw ExecError(ExecError::Kind::UnboundVariable, "unbound variable " + v->name);
        return *bound;
    }
    if (auto* n = std::get_if<Expr::Not>(&e.node)) {
        Value operand = eval_expr(*n->operand, env);
        if (operand.tag != Value::Tag::Bool)
            throw ExecError(ExecError::Kind::TypeMismatch,
                            std::string("'not' requires Bool, got ") + tag_name(operand.tag));
        return Value::boolean(!operand.b);
    }
    const auto& bin = std::get<Expr::Binary>(e.node);
    if (bin.op == dsl::BinOp::And || bin.op == dsl::BinOp::Or) {
        Value lhs = eval_expr(*bin.lhs, env);
        if (lhs.tag != Value::Tag::Bool)
            throw ExecError(ExecError::Kind::TypeMismatch,
                            std::string("logical operand must be Bool, got ") + tag_name(lhs.tag));
        // short-circuit left-to-right
        if (bin.op == dsl::BinOp::And && !lhs.b) return Value::boolean(false);
        if (bin.op == dsl::BinOp::Or && lhs.b) return Value::boolean(true);
        Value rhs = eval_expr(*bin.rhs, env);
        if (rhs.tag != Value::Tag::Bool)
            throw ExecError(ExecError::Kind::TypeMismatch,
                            std::string("logical operand must be Bool, got ") + tag_name(rhs.tag));
        return Value::boolean(rhs.b);
    }
    Value lhs = eval_expr(*bin.lhs, env);
    Value rhs = eval_expr(*bin.rhs, env);
    if (lhs.tag != rhs.tag)
        throw ExecError(ExecError::Kind::TypeMismatch,
                        std::string("cannot compare ") + tag_name(lhs.tag) + " with " +
                            tag_name(rhs.tag));
    if (lhs.tag == Value::Tag::Image)
        throw ExecError(ExecError::Kind::TypeMismatch, "cannot compare Image values");
    bool eq = lhs == rhs;
    return Value::boolean(bin.op == dsl::BinOp::Eq ? eq : !eq);
}

Value coerce_vqa_answer(const std::string& raw) {
    std::string s = raw;
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        throw ExecError(ExecError::Kind::EmptyAnswer, "empty VQA answer");
    auto e = s.find_last_not_of(" \t\r\n");
    s = s.substr(b, e - b + 1);
    while (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == '?')) s.pop_back();
    if (s.empty()) throw ExecError(ExecError::Kind::EmptyAnswer, "empty VQA answer");
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "yes") return Value::boolean(true);
    if (s == "no") return Value::boolean(false);
    bool all_digits = std::all_of(s.begin(), s.end(),
                                  [](unsigned char c) { return std::isdigit(c); });
    if (all_digits) return Value::integer(std::stoll(s));
    return Value::text(s);
}

namespace {

const dsl::Arg& require_arg(const dsl::Stmt& s, const std::string& name) {
    const dsl::Arg* a = s.find_arg(name);
    if (!a)
        throw ExecError(ExecError::Kind::BadArgs,
                        s.op_name + " requires argument \"" + name + "\"");
    return *a;
}

Value resolve_arg(const dsl::Arg& a, const Environment& env) {
    switch (a.kind) {
        case dsl::Arg::Kind::Str: return Value::text(a.text);
        case dsl::Arg::Kind::Bool: return Value::boolean(a.bool_value);
        case dsl::Arg::Kind::Int: return Value::integer(a.int_value);
        case dsl::Arg::Kind::Var: {
            const Value* v = env.find(a.text);
            if (!v)
                throw ExecError(ExecError::Kind::UnboundVariable, "unbound variable " + a.text);
            return *v;
        }
        case dsl::Arg::Kind::Expr:
            throw ExecError(ExecError::Kind::BadArgs, "expression argument outside EVAL");
    }
    throw ExecError(ExecError::Kind::BadArgs, "bad argument");
}

}  // namespace

ModuleRegistry ModuleRegistry::core(VqaBackendFn vqa) {
    ModuleRegistry r;
    r.ops["VQA"] = [vqa = std::move(vqa)](const dsl::Stmt& s, const Environment& env,
                                          StmtTrace& trace) {
        Value image = resolve_arg(require_arg(s, "image"), env);
        if (image.tag != Value::Tag::Image)
            throw ExecError(ExecError::Kind::TypeMismatch,
                            std::string("VQA image argument must be an Image, got ") +
                                tag_name(image.tag));
        Value question = resolve_arg(require_arg(s, "question"), env);
        if (question.tag != Value::Tag::Text)
            throw ExecError(ExecError::Kind::TypeMismatch, "VQA question must be Text");
        VqaRequest req{image.s, question.s};
        trace.request = req;
        std::string raw;
        try {
            raw = vqa(req);
        } catch (const std::exception& e) {
            throw ExecError(ExecError::Kind::BackendFailure, e.what());
        }
        trace.raw_reply = raw;
        return coerce_vqa_answer(raw);
    };
    r.ops["EVAL"] = [](const dsl::Stmt& s, const Environment& env, StmtTrace&) {
        if (s.args.size() != 1 || s.args[0].second.kind != dsl::Arg::Kind::Expr)
            throw ExecError(ExecError::Kind::BadArgs, "EVAL takes one expression argument");
        return eval_expr(*s.args[0].second.expr, env);
    };
    r.ops["RESULT"] = [](const dsl::Stmt& s, const Environment& env, StmtTrace&) {
        return resolve_arg(require_arg(s, "var"), env);
    };
    return r;
}

ExecutionResult execute(const dsl::Program& p, const std::string& left_image,
                        const std::string& right_image, const ModuleRegistry& registry) {
    ExecutionResult result;
    Environment env;
    env.bind("LEFT", Value::image(left_image));
    env.bind("RIGHT", Value::image(right_image));
    for (const auto& s : p.statements) {
        StmtTrace trace;
        trace.statement_text = dsl::render_stmt(s);
        try {
            auto it = registry.ops.find(s.op_name);
            if (it == registry.ops.end())
                throw ExecError(ExecError::Kind::UnknownOp, "unknown op " + s.op_name);
            for (const auto& [name, arg] : s.args)
                if (arg.kind != dsl::Arg::Kind::Expr)
                    trace.resolved_args.emplace_back(name, value_repr(resolve_arg(arg, env)));
            Value produced = it->second(s, env, trace);
            trace.value = produced;
            env.bind(s.target, produced);
            result.trace.records.push_back(std::move(trace));
        } catch (const ExecError& e) {
            trace.error = std::string(exec_error_kind_name(e.kind)) + ": " + e.what();
            result.trace.records.push_back(std::move(trace));
            result.error_kind = exec_error_kind_name(e.kind);
            result.error_message = e.what();
            return result;
        }
        if (&s == &p.statements.back()) {
            const Value& final_value = *result.trace.records.back().value;
            if (final_value.tag != Value::Tag::Bool) {
                result.error_kind = exec_error_kind_name(ExecError::Kind::NonBooleanResult);
                result.error_message =
                    std::string("RESULT value is ") + tag_name(final_value.tag) + ", expected Bool";
                result.trace.records.back().error =
                    result.error_kind + ": " + result.error_message;
                return result;
            }
            result.ok = true;
            result.verdict = final_value.b;
            result.trace.verdict = final_value.b;
        }
    }
    return result;
}

std::string trace_to_jsonl(const ExecutionTrace& t) {
    std::string out;
    for (const auto& r : t.records) {
        json obj;
        obj["statement"] = r.statement_text;
        json args = json::array();
        for (const auto& [name, repr] : r.resolved_args)
            args.push_back({{"name", name}, {"value", repr}});
        obj["args"] = args;
        if (r.request) {
            obj["request"] = {{"image", r.request->image_ref}, {"question", r.request->question}};
        }
        if (r.raw_reply) obj["reply"] = *r.raw_reply;
        if (r.value) obj["value"] = value_repr(*r.value);
        if (r.error) obj["error"] = *r.error;
        out += obj.dump();
        out += '\n';
    }
    return out;
}

}  // namespace mvr::interp
