// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion is self-contained and uses only public entry points
// (the library API and the installed CLI binary).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mvr/clients.hpp"
#include "mvr/dataset.hpp"
#include "mvr/dsl.hpp"
#include "mvr/eval.hpp"
#include "mvr/interp.hpp"
#include "mvr/pipelines.hpp"

namespace fs = std::filesystem;
using namespace mvr;

namespace {

const std::string kCli = MVR_CLI_PATH;
const fs::path kRepo = MVR_REPO_DIR;

struct Check {
    bool ok = true;
    std::string detail;

    void fail(const std::string& why) {
        if (ok) detail = why;  // keep the first failure
        ok = false;
    }
    void expect(bool cond, const std::string& why) {
        if (!cond) fail(why);
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// ---- criterion 1: published-table aggregation arithmetic ----

void criterion_table_arithmetic(Check& c) {
    struct Row {
        std::map<std::string, double> accs;
        double en, want_avg, want_gap;
    };
    const Row rows[] = {
        {{{"id", 80.6}, {"sw", 81.0}, {"ta", 78.6}, {"tr", 87.1}, {"zh", 83.2}}, 81.4, 82.1, 0.7},
        {{{"id", 64.9}, {"sw", 64.8}, {"ta", 69.6}, {"tr", 68.0}, {"zh", 65.9}}, 67.3, 66.6, -0.7},
        {{{"id", 65.2}, {"sw", 66.9}, {"ta", 68.7}, {"tr", 68.2}, {"zh", 67.2}}, 67.3, 67.2, -0.1},
    };
    for (const auto& row : rows) {
        eval::EvalReport r = eval::aggregate_accuracies(row.accs, row.en);
        if (!r.marvl_average || !r.gap) {
            c.fail("aggregate_accuracies produced no average/gap");
            return;
        }
        c.expect(std::abs(*r.marvl_average - row.want_avg) < 0.05,
                 "average " + std::to_string(*r.marvl_average) + " != " +
                     std::to_string(row.want_avg));
        c.expect(std::abs(*r.gap - row.want_gap) < 0.05,
                 "gap " + std::to_string(*r.gap) + " != " + std::to_string(row.want_gap));
    }
}

// ---- criterion 2: program execution through the CLI ----

void criterion_cli_exec(Check& c) {
    const std::string question = "Is there anyone in the bedroom?";
    fs::path dir = fs::temp_directory_path() / ("mvr_accept_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    auto run_case = [&](const std::string& left, const std::string& right,
                        const std::string& want) {
        clients::ScriptedBackend vqa(/*strict=*/true);
        vqa.add_reply(pipelines::vqa_messages("left.jpg", question), left);
        vqa.add_reply(pipelines::vqa_messages("right.jpg", question), right);
        fs::path script = dir / "vqa.jsonl";
        vqa.save(script.string());
        fs::path out = dir / "stdout";
        std::string cmd = kCli + " exec " + (kRepo / "data/programs/bedroom.prog").string() +
                          " --vqa " + script.string() +
                          " --left left.jpg --right right.jpg > " + out.string() + " 2>/dev/null";
        int status = std::system(cmd.c_str());
        c.expect(WIFEXITED(status) && WEXITSTATUS(status) == 0, "exec exited nonzero");
        c.expect(slurp(out) == want + "\n",
                 "answers (" + left + "," + right + ") printed \"" + slurp(out) +
                     "\", wanted " + want);
    };
    run_case("Yes.", "No.", "False");
    run_case("No.", "Yes.", "True");
    fs::remove_all(dir);
}

// ---- criterion 3: exhaustive evaluator-vs-oracle equivalence ----

bool oracle_eval(const dsl::Expr& e, const std::map<std::string, bool>& env) {
    using dsl::Expr;
    if (auto* b = std::get_if<Expr::BoolLit>(&e.node)) return b->value;
    if (auto* v = std::get_if<Expr::Var>(&e.node)) return env.at(v->name);
    if (auto* n = std::get_if<Expr::Not>(&e.node)) return !oracle_eval(*n->operand, env);
    const auto& bin = std::get<Expr::Binary>(e.node);
    bool l = oracle_eval(*bin.lhs, env);
    bool r = oracle_eval(*bin.rhs, env);
    switch (bin.op) {
        case dsl::BinOp::Eq: return l == r;
        case dsl::BinOp::Ne: return l != r;
        case dsl::BinOp::And: return l && r;
        case dsl::BinOp::Or: return l || r;
    }
    return false;
}

std::vector<dsl::ExprPtr> enumerate_exprs(int depth) {
    std::vector<dsl::ExprPtr> leaves = {
        dsl::make_bool(true), dsl::make_bool(false),
        dsl::make_var("A"), dsl::make_var("B"), dsl::make_var("C"),
    };
    if (depth <= 1) return leaves;
    std::vector<dsl::ExprPtr> smaller = enumerate_exprs(depth - 1);
    std::vector<dsl::ExprPtr> out = smaller;
    for (const auto& e : smaller) out.push_back(dsl::make_not(e));
    for (dsl::BinOp op : {dsl::BinOp::Eq, dsl::BinOp::Ne, dsl::BinOp::And, dsl::BinOp::Or})
        for (const auto& l : smaller)
            for (const auto& r : smaller) out.push_back(dsl::make_binary(op, l, r));
    return out;
}

void criterion_expression_oracle(Check& c) {
    auto exprs = enumerate_exprs(3);
    c.expect(exprs.size() > 10000, "expected thousands of enumerated expressions");
    long mismatches = 0;
    for (int bits = 0; bits < 8; ++bits) {
        std::map<std::string, bool> bools = {
            {"A", (bits & 1) != 0}, {"B", (bits & 2) != 0}, {"C", (bits & 4) != 0}};
        interp::Environment env;
        for (const auto& [name, value] : bools) env.bind(name, interp::Value::boolean(value));
        for (const auto& e : exprs) {
            interp::Value got = interp::eval_expr(*e, env);
            if (got.tag != interp::Value::Tag::Bool || got.b != oracle_eval(*e, bools))
                ++mismatches;
        }
    }
    c.expect(mismatches == 0,
             std::to_string(mismatches) + " evaluator/oracle mismatches over " +
                 std::to_string(exprs.size() * 8) + " cases");
}

// ---- criterion 4: parser round trip and error positions ----

dsl::ExprPtr random_expr(std::mt19937& rng, int depth, const std::vector<std::string>& bound) {
    int pick = static_cast<int>(rng() % (depth <= 0 ? 4 : 7));
    switch (pick) {
        case 0: return dsl::make_bool(rng() % 2 == 0);
        case 1: return dsl::make_int(static_cast<long>(rng() % 20));
        case 2: return dsl::make_str("s" + std::to_string(rng() % 9));
        case 3: return dsl::make_var(bound[rng() % bound.size()]);
        case 4: return dsl::make_not(random_expr(rng, depth - 1, bound));
        default: {
            dsl::BinOp ops[] = {dsl::BinOp::Eq, dsl::BinOp::Ne, dsl::BinOp::And, dsl::BinOp::Or};
            return dsl::make_binary(ops[rng() % 4], random_expr(rng, depth - 1, bound),
                                    random_expr(rng, depth - 1, bound));
        }
    }
}

std::string random_program(std::mt19937& rng) {
    std::ostringstream out;
    int n = 1 + static_cast<int>(rng() % 6);
    std::vector<std::string> bound = {"LEFT", "RIGHT"};
    for (int i = 0; i < n; ++i) {
        std::string target = "T" + std::to_string(i);
        if (rng() % 2 == 0) {
            out << target << "=VQA(image=" << bound[rng() % 2]
                << ",question='q " << rng() % 100 << ", with a comma')\n";
        } else {
            dsl::ExprPtr e = random_expr(rng, 3, bound);
            out << target << "=EVAL(" << dsl::render_expr(*e) << ")\n";
        }
        bound.push_back(target);
    }
    out << "FINAL=RESULT(var=T" << rng() % n << ")\n";
    return out.str();
}

void criterion_parser_round_trip(Check& c) {
    std::mt19937 rng(42);
    for (int i = 0; i < 1000; ++i) {
        std::string text = random_program(rng);
        try {
            dsl::Program p = dsl::parse_program(text);
            std::string rendered = dsl::render_program(p);
            dsl::Program again = dsl::parse_program(rendered);
            if (dsl::render_program(again) != rendered) {
                c.fail("round trip not a fixed point for:\n" + text);
                return;
            }
        } catch (const dsl::ParseError& e) {
            c.fail(std::string("generated program failed to parse: ") + e.what());
            return;
        }
    }

    struct BadCase {
        const char* text;
        dsl::ParseError::Kind kind;
        int line;
    };
    const BadCase bad[] = {
        {"A=VQA(image=LEFT,question='q')\n", dsl::ParseError::Kind::MissingResult, 0},
        {"A=EVAL(True)\nA=EVAL(False)\nR=RESULT(var=A)\n", dsl::ParseError::Kind::Reassignment, 2},
        {"A=EVAL(B == True)\nR=RESULT(var=A)\n", dsl::ParseError::Kind::UseBeforeAssign, 1},
        {"A=EVAL(True and)\nR=RESULT(var=A)\n", dsl::ParseError::Kind::Syntax, 1},
        {"A=VQA(image=LEFT,question='open\nR=RESULT(var=A)\n", dsl::ParseError::Kind::Syntax, 1},
    };
    for (const auto& b : bad) {
        try {
            dsl::parse_program(b.text);
            c.fail(std::string("invalid program accepted: ") + b.text);
        } catch (const dsl::ParseError& e) {
            c.expect(e.kind == b.kind, std::string("wrong error kind for: ") + b.text);
            if (b.line > 0)
                c.expect(e.line == b.line,
                         "error on line " + std::to_string(e.line) + ", expected line " +
                             std::to_string(b.line) + " for: " + b.text);
        }
    }
}

// ---- criterion 5: scripted strategy equivalence and determinism ----

void criterion_scripted_equivalence(Check& c) {
    Dataset dataset = load_dataset((kRepo / "data/synthetic.jsonl").string());
    c.expect(dataset.examples.size() == 20, "bundled dataset should have 20 examples");
    clients::ScriptedBackend vision =
        clients::ScriptedBackend::load((kRepo / "data/scripts/vision.jsonl").string());
    clients::IdentityTranslator identity;
    pipelines::Templates templates = pipelines::Templates::defaults();
    pipelines::StrategyBackends backends;
    backends.translator = &identity;
    backends.vision = &vision;

    std::string baseline_jsonl;
    std::vector<std::optional<bool>> baseline_verdicts;
    for (int workers : {1, 4, 16}) {
        for (int repeat = 0; repeat < 2; ++repeat) {
            auto e2e = pipelines::run_all(dataset, pipelines::Strategy::EndToEnd, backends,
                                          templates, workers);
            auto tt = pipelines::run_all(dataset, pipelines::Strategy::TranslateTest, backends,
                                         templates, workers);
            c.expect(e2e.size() == tt.size(), "prediction count mismatch");
            for (size_t i = 0; i < e2e.size(); ++i) {
                c.expect(e2e[i].example_id == tt[i].example_id, "ordering mismatch");
                c.expect(e2e[i].verdict == tt[i].verdict,
                         "verdict mismatch on " + e2e[i].example_id);
            }
            // the identity-translated run must regenerate the same report bytes
            auto counts = eval::score(tt, dataset, /*strict=*/true);
            eval::EvalReport report = eval::aggregate(counts);
            report.strategy = "translate_test";
            std::string jsonl = pipelines::predictions_to_jsonl(e2e) +
                                eval::render_report(report, eval::ReportFormat::Markdown) +
                                eval::render_report(report, eval::ReportFormat::Csv);
            if (baseline_jsonl.empty()) {
                baseline_jsonl = jsonl;
                for (const auto& p : e2e) baseline_verdicts.push_back(p.verdict);
            } else {
                c.expect(jsonl == baseline_jsonl,
                         "outputs differ at max_in_flight=" + std::to_string(workers));
            }
        }
    }
    // the scripted fixture flips exactly three gold labels
    int correct = 0;
    for (size_t i = 0; i < dataset.examples.size(); ++i)
        if (baseline_verdicts[i] && *baseline_verdicts[i] == dataset.examples[i].gold_label)
            ++correct;
    c.expect(correct == 17, "expected 17/20 agreement, got " + std::to_string(correct));
}

// ---- criterion 6: caption-then-reason call shapes ----

class RecordingBackend : public clients::ChatBackend {
public:
    explicit RecordingBackend(clients::ChatBackend& inner) : inner_(&inner) {}
    std::string chat(const std::vector<clients::Message>& messages) override {
        requests.push_back(messages);
        return inner_->chat(messages);
    }
    std::vector<std::vector<clients::Message>> requests;

private:
    clients::ChatBackend* inner_;
};

void criterion_caption_reason(Check& c) {
    pipelines::Templates t = pipelines::Templates::defaults();
    VisualReasoningExample ex;
    ex.id = "zh-pencil";
    ex.statement = "左边的图片有几支不同颜色的铅笔，而右边的图片只有一支铅笔";
    ex.language = "zh";
    ex.left_image = "http://img/pencil-l.jpg";
    ex.right_image = "http://img/pencil-r.jpg";
    ex.gold_label = false;
    const std::string translated =
        "The picture on the left has several pencils of different colors, and the picture on "
        "the right has only one pencil";
    const std::string left_instruction =
        "Write a short caption describing the number and colors of pencils";
    const std::string right_instruction = "Write a short caption describing the number of pencils";
    const std::string caption_left =
        "A pencil case containing a single natural wood colored pencil along with other "
        "stationery items.";
    const std::string caption_right =
        "A young mind sketches ideas with a classic green pencil on paper.";

    clients::ScriptedBackend translation_chat(true);
    translation_chat.add_reply(clients::ChatTranslator::prompt_for(ex.statement, "zh", "en"),
                               translated);
    clients::ChatTranslator translator(translation_chat);

    clients::ScriptedBackend instruction(true);
    instruction.add_reply(
        {clients::user_text(t.instructions.render({{"statement", translated}}))},
        "LEFT: " + left_instruction + "\nRIGHT: " + right_instruction);

    clients::ScriptedBackend caption(true);
    caption.add_reply(pipelines::caption_messages(ex.left_image, left_instruction, t.caption),
                      caption_left);
    caption.add_reply(pipelines::caption_messages(ex.right_image, right_instruction, t.caption),
                      caption_right);
    RecordingBackend recorded(caption);

    clients::ScriptedBackend reasoning(true);
    reasoning.add_reply(
        {clients::user_text(t.reasoning.render({{"statement", translated},
                                                {"caption_left", caption_left},
                                                {"caption_right", caption_right}}))},
        "The statement is False. This is because the left image shows a single pencil.");

    pipelines::Prediction p =
        pipelines::run_caption_reason(ex, translator, instruction, recorded, reasoning, t);
    c.expect(!p.failed(), "prediction failed: " + p.failed_reason);
    c.expect(p.verdict == std::optional<bool>(false), "verdict should be false");
    c.expect(recorded.requests.size() == 2,
             "expected 2 caption calls, saw " + std::to_string(recorded.requests.size()));
    for (const auto& msgs : recorded.requests) {
        int images = 0;
        for (const auto& m : msgs)
            for (const auto& part : m.parts)
                if (part.kind == clients::MessagePart::Kind::Image) ++images;
        c.expect(images == 1, "each caption request must carry exactly one image");
    }
    c.expect(p.trace["stages"].size() == 5,
             "expected 5 stage records, saw " + std::to_string(p.trace["stages"].size()));
    const char* want[] = {"translate", "instructions", "caption_left", "caption_right",
                          "reasoning"};
    for (int i = 0; i < 5 && i < static_cast<int>(p.trace["stages"].size()); ++i)
        c.expect(p.trace["stages"][i]["stage"] == want[i],
                 std::string("stage ") + std::to_string(i) + " is not " + want[i]);
}

// ---- criterion 7: length-bucket bookkeeping ----

void criterion_length_buckets(Check& c) {
    Dataset d;
    std::vector<pipelines::Prediction> preds;
    auto add = [&](int words, bool correct) {
        VisualReasoningExample ex;
        ex.id = "e" + std::to_string(d.examples.size());
        for (int i = 0; i < words; ++i) ex.statement += (i ? " w" : "w");
        ex.language = "en";
        ex.left_image = "l";
        ex.right_image = "r";
        ex.gold_label = true;
        pipelines::Prediction p;
        p.example_id = ex.id;
        p.verdict = correct;
        d.examples.push_back(ex);
        preds.push_back(p);
    };
    // accuracy by bucket: [1-5] 4/4, [6-10] 3/4, [11-15] 2/4
    for (int i = 0; i < 4; ++i) add(2 + i, true);
    for (int i = 0; i < 4; ++i) add(6 + i, i < 3);
    for (int i = 0; i < 4; ++i) add(11 + i, i < 2);
    auto buckets = eval::length_analysis(preds, d, 5);
    c.expect(buckets.size() == 3, "expected 3 buckets");
    int total = 0;
    for (size_t i = 0; i < buckets.size(); ++i) {
        total += buckets[i].n;
        if (i > 0)
            c.expect(buckets[i].accuracy < buckets[i - 1].accuracy,
                     "bucket accuracies should strictly decrease in this fixture");
    }
    c.expect(total == static_cast<int>(d.examples.size()),
             "bucket counts must sum to the dataset size");
}

// ---- criterion 8: unparsable replies score as incorrect ----

void criterion_unparsable_scoring(Check& c) {
    Dataset d;
    std::vector<pipelines::Prediction> preds;
    const int n = 10, k = 4;
    for (int i = 0; i < n; ++i) {
        VisualReasoningExample ex;
        ex.id = "e" + std::to_string(i);
        ex.statement = "s";
        ex.language = "en";
        ex.left_image = "l";
        ex.right_image = "r";
        ex.gold_label = true;
        d.examples.push_back(ex);
        pipelines::Prediction p;
        p.example_id = ex.id;
        if (i < k)
            p.failed_reason = "UnparsableAnswer";  // verdict left empty
        else
            p.verdict = true;
        preds.push_back(p);
    }
    auto counts = eval::score(preds, d, /*strict=*/true);
    c.expect(counts.at("en").n == n, "all predictions must be counted");
    c.expect(counts.at("en").correct == n - k,
             "exactly k unparsable replies must score incorrect; correct=" +
                 std::to_string(counts.at("en").correct));
}

}  // namespace

int main() {
    struct Criterion {
        const char* label;
        std::function<void(Check&)> fn;
        double budget_s;  // 0 = no limit
    };
    const Criterion criteria[] = {
        {"published-table aggregation arithmetic", criterion_table_arithmetic, 0},
        {"program execution through the CLI", criterion_cli_exec, 0},
        {"exhaustive expression-oracle equivalence", criterion_expression_oracle, 10},
        {"parser round trip and error positions", criterion_parser_round_trip, 10},
        {"scripted strategy equivalence and determinism", criterion_scripted_equivalence, 30},
        {"caption-then-reason call shapes", criterion_caption_reason, 0},
        {"length-bucket bookkeeping", criterion_length_buckets, 0},
        {"unparsable replies score as incorrect", criterion_unparsable_scoring, 0},
    };

    int failures = 0;
    int index = 0;
    for (const auto& criterion : criteria) {
        ++index;
        Check check;
        auto start = std::chrono::steady_clock::now();
        try {
            criterion.fn(check);
        } catch (const std::exception& e) {
            check.fail(std::string("unexpected exception: ") + e.what());
        }
        double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (criterion.budget_s > 0 && elapsed > criterion.budget_s)
            check.fail("took " + std::to_string(elapsed) + "s, budget " +
                       std::to_string(criterion.budget_s) + "s");
        if (check.ok) {
            std::printf("PASS criterion %d: %s\n", index, criterion.label);
        } else {
            std::printf("FAIL criterion %d: %s (%s)\n", index, criterion.label,
                        check.detail.c_str());
            ++failures;
        }
    }
    return failures == 0 ? 0 : 1;
}
