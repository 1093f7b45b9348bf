#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mvr/clients.hpp"
#include "mvr/config.hpp"
#include "mvr/dataset.hpp"
#include "mvr/dsl.hpp"
#include "mvr/eval.hpp"
#include "mvr/interp.hpp"
#include "mvr/pipelines.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDataset = 3;
constexpr int kExitBackend = 4;

struct Overrides {
    std::optional<std::string> strategy;
    std::optional<std::string> language;
    std::optional<int> max_in_flight;
    std::optional<int> bucket_width;
    std::optional<std::string> out_dir;
    std::optional<bool> strict;
    std::optional<std::string> template_dir;
};

// command-line overrides beat file values beat defaults
void apply_overrides(mvr::config::RunConfig& rc, const Overrides& ov) {
    if (ov.strategy) {
        auto s = mvr::pipelines::strategy_from_name(*ov.strategy);
        if (!s) throw mvr::config::ConfigError("unknown strategy \"" + *ov.strategy + "\"");
        rc.strategy = *s;
    }
    if (ov.max_in_flight) rc.max_in_flight = *ov.max_in_flight;
    if (ov.bucket_width) rc.bucket_width = *ov.bucket_width;
    if (ov.out_dir) rc.out_dir = *ov.out_dir;
    if (ov.strict) rc.strict_scoring = *ov.strict;
    if (ov.template_dir) rc.template_dir = *ov.template_dir;
    // a strategy override may demand roles the file never bound
    for (const auto& role : mvr::config::required_roles(rc.strategy)) {
        if (rc.backends.count(role)) continue;
        if (role == "translator") {
            mvr::config::BackendSpec spec;
            spec.kind = mvr::config::BackendSpec::Kind::Identity;
            rc.backends[role] = spec;
            continue;
        }
        throw mvr::config::ConfigError("strategy " + mvr::pipelines::strategy_name(rc.strategy) +
                                       " requires a \"" + role + "\" backend");
    }
}

mvr::Dataset load_datasets(const mvr::config::RunConfig& rc,
                           const std::optional<std::string>& only_language) {
    mvr::Dataset merged;
    std::set<std::string> ids;
    for (const auto& [lang, path] : rc.dataset_paths) {
        std::optional<std::string> expected;
        if (!lang.empty()) expected = lang;
        mvr::Dataset d = mvr::load_dataset(path, expected);
        for (auto& ex : d.examples) {
            if (only_language && ex.language != *only_language) continue;
            if (!ids.insert(ex.id).second)
                throw mvr::DatasetError(mvr::DatasetError::Kind::DuplicateId, 0,
                                        "duplicate id \"" + ex.id + "\" across dataset files");
            merged.language_histogram[ex.language]++;
            merged.examples.push_back(std::move(ex));
        }
    }
    merged.source_path = "<merged>";
    return merged;
}

struct BackendSet {
    std::vector<std::unique_ptr<mvr::clients::ChatBackend>> chats;
    std::unique_ptr<mvr::clients::Translator> translator;
    mvr::pipelines::StrategyBackends wired;
};

BackendSet build_backends(const mvr::config::RunConfig& rc) {
    using mvr::config::BackendSpec;
    BackendSet set;
    auto make_chat = [&](const BackendSpec& spec) -> mvr::clients::ChatBackend* {
        if (spec.kind == BackendSpec::Kind::Scripted) {
            auto b = std::make_unique<mvr::clients::ScriptedBackend>(
                mvr::clients::ScriptedBackend::load(spec.script_path));
            set.chats.push_back(std::move(b));
        } else {
            set.chats.push_back(std::make_unique<mvr::clients::HttpChatBackend>(spec.http));
        }
        return set.chats.back().get();
    };
    for (const auto& [role, spec] : rc.backends) {
        if (role == "translator") {
            if (spec.kind == BackendSpec::Kind::Identity) {
                set.translator = std::make_unique<mvr::clients::IdentityTranslator>();
            } else {
                set.translator =
                    std::make_unique<mvr::clients::ChatTranslator>(*make_chat(spec));
            }
            set.wired.translator = set.translator.get();
            continue;
        }
        mvr::clients::ChatBackend* chat = make_chat(spec);
        if (role == "vision") set.wired.vision = chat;
        else if (role == "codegen") set.wired.codegen = chat;
        else if (role == "vqa") set.wired.vqa = chat;
        else if (role == "instruction") set.wired.instruction = chat;
        else if (role == "caption") set.wired.caption = chat;
        else if (role == "reasoning") set.wired.reasoning = chat;
        else throw mvr::config::ConfigError("unknown backend role \"" + role + "\"");
    }
    return set;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

void write_reports(const mvr::config::RunConfig& rc, const mvr::Dataset& dataset,
                   const std::vector<mvr::pipelines::Prediction>& preds) {
    fs::create_directories(rc.out_dir);
    write_file(fs::path(rc.out_dir) / "predictions.jsonl",
               mvr::pipelines::predictions_to_jsonl(preds));

    auto counts = mvr::eval::score(preds, dataset, rc.strict_scoring);
    mvr::eval::EvalReport report = mvr::eval::aggregate(counts);
    report.strategy = mvr::pipelines::strategy_name(rc.strategy);
    try {
        report.length_table = mvr::eval::length_analysis(preds, dataset, rc.bucket_width);
    } catch (const mvr::eval::EvalError& e) {
        if (e.kind != mvr::eval::EvalError::Kind::MissingTranslation) throw;
        // no stored translations (e.g. plain end_to_end on non-English data)
    }
    write_file(fs::path(rc.out_dir) / "report.md",
               mvr::eval::render_report(report, mvr::eval::ReportFormat::Markdown));
    write_file(fs::path(rc.out_dir) / "report.csv",
               mvr::eval::render_report(report, mvr::eval::ReportFormat::Csv));
    write_file(fs::path(rc.out_dir) / "report.jsonl",
               mvr::eval::render_report(report, mvr::eval::ReportFormat::JsonLines));
    std::cout << mvr::eval::render_report(report, mvr::eval::ReportFormat::Markdown);
}

int cmd_run(const std::string& config_path, const Overrides& ov) {
    mvr::config::RunConfig rc;
    try {
        rc = mvr::config::load_run_config(config_path);
        apply_overrides(rc, ov);
    } catch (const mvr::config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    mvr::Dataset dataset;
    try {
        dataset = load_datasets(rc, ov.language);
    } catch (const mvr::DatasetError& e) {
        std::cerr << "dataset error: " << e.what() << "\n";
        return kExitDataset;
    }
    try {
        BackendSet backends = build_backends(rc);
        mvr::pipelines::Templates templates = rc.template_dir.empty()
                                                  ? mvr::pipelines::Templates::defaults()
                                                  : mvr::pipelines::Templates::from_dir(rc.template_dir);
        auto preds = mvr::pipelines::run_all(dataset, rc.strategy, backends.wired, templates,
                                             rc.max_in_flight);
        write_reports(rc, dataset, preds);
    } catch (const mvr::config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "fatal backend error: " << e.what() << "\n";
        return kExitBackend;
    }
    return kExitOk;
}

json expr_to_json(const mvr::dsl::Expr& e);

json arg_to_json(const mvr::dsl::Arg& a) {
    using mvr::dsl::Arg;
    switch (a.kind) {
        case Arg::Kind::Str: return {{"str", a.text}};
        case Arg::Kind::Var: return {{"var", a.text}};
        case Arg::Kind::Bool: return {{"bool", a.bool_value}};
        case Arg::Kind::Int: return {{"int", a.int_value}};
        case Arg::Kind::Expr: return {{"expr", expr_to_json(*a.expr)}};
    }
    return {};
}

json expr_to_json(const mvr::dsl::Expr& e) {
    using mvr::dsl::Expr;
    if (auto* b = std::get_if<Expr::BoolLit>(&e.node)) return {{"bool", b->value}};
    if (auto* i = std::get_if<Expr::IntLit>(&e.node)) return {{"int", i->value}};
    if (auto* s = std::get_if<Expr::StrLit>(&e.node)) return {{"str", s->value}};
    if (auto* v = std::get_if<Expr::Var>(&e.node)) return {{"var", v->name}};
    if (auto* n = std::get_if<Expr::Not>(&e.node)) return {{"not", expr_to_json(*n->operand)}};
    const auto& bin = std::get<Expr::Binary>(e.node);
    const char* op = "";
    switch (bin.op) {
        case mvr::dsl::BinOp::Eq: op = "=="; break;
        case mvr::dsl::BinOp::Ne: op = "!="; break;
        case mvr::dsl::BinOp::And: op = "and"; break;
        case mvr::dsl::BinOp::Or: op = "or"; break;
    }
    return {{"op", op}, {"lhs", expr_to_json(*bin.lhs)}, {"rhs", expr_to_json(*bin.rhs)}};
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

int cmd_parse(const std::string& program_path) {
    try {
        mvr::dsl::Program p = mvr::dsl::parse_program(read_file(program_path));
        json out = json::array();
        for (const auto& s : p.statements) {
            json args = json::array();
            for (const auto& [name, arg] : s.args)
                args.push_back({{"name", name}, {"value", arg_to_json(arg)}});
            out.push_back({{"target", s.target}, {"op", s.op_name}, {"args", args}});
        }
        std::cout << out.dump(2) << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 1;
    }
}

int cmd_exec(const std::string& program_path, const std::string& vqa_script,
             const std::string& left, const std::string& right) {
    try {
        mvr::dsl::Program p = mvr::dsl::parse_program(read_file(program_path));
        mvr::clients::ScriptedBackend vqa = mvr::clients::ScriptedBackend::load(vqa_script);
        auto vqa_fn = [&vqa](const mvr::interp::VqaRequest& req) {
            return vqa.chat(mvr::pipelines::vqa_messages(req.image_ref, req.question));
        };
        auto result = mvr::interp::execute(p, left, right,
                                           mvr::interp::ModuleRegistry::core(vqa_fn));
        std::cerr << mvr::interp::trace_to_jsonl(result.trace);
        if (!result.ok) {
            std::cerr << "execution error: " << result.error_kind << ": "
                      << result.error_message << "\n";
            return 1;
        }
        std::cout << (result.verdict ? "True" : "False") << "\n";
        return kExitOk;
    } catch (const mvr::dsl::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBackend;
    }
}

int cmd_report(const std::string& config_path, const std::string& predictions_path,
               const Overrides& ov) {
    mvr::config::RunConfig rc;
    try {
        rc = mvr::config::load_run_config(config_path);
        apply_overrides(rc, ov);
    } catch (const mvr::config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    try {
        mvr::Dataset dataset = load_datasets(rc, ov.language);
        auto preds = mvr::pipelines::predictions_from_jsonl(read_file(predictions_path));
        write_reports(rc, dataset, preds);
        return kExitOk;
    } catch (const mvr::DatasetError& e) {
        std::cerr << "dataset error: " << e.what() << "\n";
        return kExitDataset;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

int cmd_validate_dataset(const std::string& path, const std::optional<std::string>& language) {
    try {
        mvr::Dataset d = mvr::load_dataset(path, language);
        std::cout << "ok: " << d.examples.size() << " examples\n";
        for (const auto& [lang, n] : d.language_histogram)
            std::cout << "  " << lang << ": " << n << "\n";
        return kExitOk;
    } catch (const mvr::DatasetError& e) {
        std::cerr << "dataset error: " << e.what() << "\n";
        return kExitDataset;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multilingual visual reasoning pipelines and evaluation harness"};
    app.require_subcommand(1);

    Overrides ov;
    std::string config_path, program_path, vqa_script, left_ref, right_ref;
    std::string predictions_path, dataset_path;
    std::string language_flag;
    bool strict_flag = false;

    auto add_override_flags = [&](CLI::App* cmd) {
        cmd->add_option("--strategy", [&ov](const std::vector<std::string>& v) {
            ov.strategy = v.at(0);
            return true;
        }, "strategy override");
        cmd->add_option("--language", [&ov](const std::vector<std::string>& v) {
            ov.language = v.at(0);
            return true;
        }, "run only this language");
        cmd->add_option("--max-in-flight", [&ov](const std::vector<std::string>& v) {
            ov.max_in_flight = std::stoi(v.at(0));
            return true;
        }, "bounded concurrency");
        cmd->add_option("--bucket-width", [&ov](const std::vector<std::string>& v) {
            ov.bucket_width = std::stoi(v.at(0));
            return true;
        }, "length-analysis bucket width in words");
        cmd->add_option("--out", [&ov](const std::vector<std::string>& v) {
            ov.out_dir = v.at(0);
            return true;
        }, "output directory");
        cmd->add_flag("--strict", [&ov](std::int64_t) { ov.strict = true; },
                      "require a prediction for every example");
        cmd->add_option("--template-dir", [&ov](const std::vector<std::string>& v) {
            ov.template_dir = v.at(0);
            return true;
        }, "prompt template directory");
    };

    auto* run = app.add_subcommand("run", "run a strategy over the configured datasets");
    run->add_option("--config", config_path, "run configuration file")->required();
    add_override_flags(run);

    auto* parse = app.add_subcommand("parse", "parse a visual program and print its AST");
    parse->add_option("program", program_path, "program file")->required();

    auto* exec = app.add_subcommand("exec", "execute a visual program with a scripted VQA backend");
    exec->add_option("program", program_path, "program file")->required();
    exec->add_option("--vqa", vqa_script, "VQA script file")->required();
    exec->add_option("--left", left_ref, "left image reference")->required();
    exec->add_option("--right", right_ref, "right image reference")->required();

    auto* report = app.add_subcommand("report", "re-render reports from predictions.jsonl");
    report->add_option("--config", config_path, "run configuration file")->required();
    report->add_option("--predictions", predictions_path, "predictions.jsonl path")->required();
    add_override_flags(report);

    auto* validate = app.add_subcommand("validate-dataset", "load and validate a dataset file");
    validate->add_option("dataset", dataset_path, "dataset file")->required();
    validate->add_option("--language", language_flag, "expected language code");
    (void)strict_flag;

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return cmd_run(config_path, ov);
    if (parse->parsed()) return cmd_parse(program_path);
    if (exec->parsed()) return cmd_exec(program_path, vqa_script, left_ref, right_ref);
    if (report->parsed()) return cmd_report(config_path, predictions_path, ov);
    if (validate->parsed())
        return cmd_validate_dataset(dataset_path,
                                    language_flag.empty()
                                        ? std::nullopt
                                        : std::optional<std::string>(language_flag));
    return kExitConfig;
}
