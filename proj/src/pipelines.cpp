#include "mvr/pipelines.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "mvr/dsl.hpp"
#include "mvr/interp.hpp"

namespace mvr::pipelines {

using clients::BackendError;
using clients::Message;
using clients::MessagePart;
using nlohmann::json;

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::EndToEnd: return "end_to_end";
        case Strategy::TranslateTest: return "translate_test";
        case Strategy::VisProg: return "visprog";
        case Strategy::CaptionReason: return "caption_reason";
    }
    return "";
}

std::optional<Strategy> strategy_from_name(const std::string& name) {
    if (name == "end_to_end") return Strategy::EndToEnd;
    if (name == "translate_test") return Strategy::TranslateTest;
    if (name == "visprog") return Strategy::VisProg;
    if (name == "caption_reason") return Strategy::CaptionReason;
    return {};
}

TemplateError::TemplateError(const std::string& message) : std::runtime_error(message) {}

std::string PromptTemplate::render(const std::map<std::string, std::string>& vars) const {
    for (const auto& r : required_placeholders)
        if (!vars.count(r))
            throw TemplateError("template " + name + ": required placeholder {" + r +
                                "} is unbound");
    std::string out;
    out.reserve(body.size());
    size_t i = 0;
    while (i < body.size()) {
        if (body[i] != '{') {
            out += body[i++];
            continue;
        }
        size_t close = body.find('}', i);
        if (close == std::string::npos)
            throw TemplateError("template " + name + ": unbalanced '{'");
        std::string key = body.substr(i + 1, close - i - 1);
        auto it = vars.find(key);
        if (it == vars.end())
            throw TemplateError("template " + name + ": unknown placeholder {" + key + "}");
        out += it->second;
        i = close + 1;
    }
    return out;
}

PromptTemplate PromptTemplate::from_file(const std::string& path, const std::string& name,
                                         std::set<std::string> required) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TemplateError("cannot open template file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return PromptTemplate{name, buf.str(), std::move(required)};
}

const std::string& dsl_grammar_ebnf() {
    static const std::string grammar = R"ebnf(program    = statement , { newline , statement } ;
statement  = identifier , "=" , operation ;
operation  = "VQA" , "(" , "image" , "=" , identifier , "," , "question" , "=" , string , ")"
           | "EVAL" , "(" , expression , ")"
           | "RESULT" , "(" , "var" , "=" , identifier , ")" ;
expression = conjunct , { "or" , conjunct } ;
conjunct   = negation , { "and" , negation } ;
negation   = "not" , negation | comparison ;
comparison = primary , [ ( "==" | "!=" ) , primary ] ;
primary    = "True" | "False" | integer | string | identifier | "(" , expression , ")" ;
string     = "'" , { character - "'" } , "'" ;
identifier = ( letter | "_" ) , { letter | digit | "_" } ;
The variables LEFT and RIGHT hold the two images. Each variable may be assigned
only once and must be assigned before use. The last statement must be RESULT.)ebnf";
    return grammar;
}

namespace {

const char* kEndToEndBody =
    "You are shown two images: the first is the left image, the second is the right image.\n"
    "Statement: {statement}\n"
    "Decide whether the statement is true or false of this pair of images.\n"
    "Begin your reply with the single word True or False, then briefly explain.\n";

const char* kCodegenBody =
    "Write a visual program that decides whether a statement about a pair of images is true.\n"
    "The program must follow this grammar exactly:\n"
    "\n"
    "{grammar}\n"
    "\n"
    "Example statement: There is no one in the bedroom on the left, and there is someone in "
    "the bedroom on the right\n"
    "Example program:\n"
    "ANSWER0=VQA(image=LEFT,question='Is there anyone in the bedroom?')\n"
    "ANSWER1=VQA(image=RIGHT,question='Is there anyone in the bedroom?')\n"
    "ANSWER2=EVAL(ANSWER0 == False and ANSWER1 == True)\n"
    "FINAL_ANSWER=RESULT(var=ANSWER2)\n"
    "\n"
    "Statement: {statement}\n"
    "Reply with only the program, one statement per line.\n";

const char* kInstructionsBody =
    "A statement describes a pair of images, a left image and a right image.\n"
    "Write one short captioning instruction per image, so that captions following the\n"
    "instructions capture exactly the facts needed to verify the statement.\n"
    "Statement: {statement}\n"
    "Reply with exactly two lines:\n"
    "LEFT: <instruction for the left image>\n"
    "RIGHT: <instruction for the right image>\n";

const char* kCaptionBody = "{instruction}\n";

const char* kReasoningBody =
    "A statement describes a pair of images. You are given one caption per image.\n"
    "Left image caption: {caption_left}\n"
    "Right image caption: {caption_right}\n"
    "Statement: {statement}\n"
    "Decide whether the statement is true or false given the captions.\n"
    "Begin your reply with the single word True or False, then explain your reasoning.\n";

}  // namespace

Templates Templates::defaults() {
    Templates t;
    t.end_to_end = {"end_to_end", kEndToEndBody, {"statement"}};
    t.codegen = {"codegen", kCodegenBody, {"statement", "grammar"}};
    t.instructions = {"instructions", kInstructionsBody, {"statement"}};
    t.caption = {"caption", kCaptionBody, {"instruction"}};
    t.reasoning = {"reasoning", kReasoningBody, {"statement", "caption_left", "caption_right"}};
    return t;
}

Templates Templates::from_dir(const std::string& dir) {
    Templates t;
    t.end_to_end = PromptTemplate::from_file(dir + "/end_to_end.txt", "end_to_end", {"statement"});
    t.codegen = PromptTemplate::from_file(dir + "/codegen.txt", "codegen",
                                          {"statement", "grammar"});
    t.instructions =
        PromptTemplate::from_file(dir + "/instructions.txt", "instructions", {"statement"});
    t.caption = PromptTemplate::from_file(dir + "/caption.txt", "caption", {"instruction"});
    t.reasoning = PromptTemplate::from_file(dir + "/reasoning.txt", "reasoning",
                                            {"statement", "caption_left", "caption_right"});
    return t;
}

std::string strip_code_fences(const std::string& text) {
    auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos || text.compare(first, 3, "```") != 0) return text;
    auto body_start = text.find('\n', first);
    if (body_start == std::string::npos) return text;
    ++body_start;
    auto fence_end = text.rfind("```");
    if (fence_end <= body_start) return text;
    return text.substr(body_start, fence_end - body_start);
}

std::vector<Message> end_to_end_messages(const VisualReasoningExample& ex,
                                         const std::string& statement,
                                         const PromptTemplate& tmpl) {
    std::string prompt = tmpl.render({{"statement", statement}});
    return {clients::user_parts({MessagePart::image(ex.left_image),
                                 MessagePart::image(ex.right_image),
                                 MessagePart::text(std::move(prompt))})};
}

std::vector<Message> vqa_messages(const std::string& image_ref, const std::string& question) {
    return {clients::user_parts({MessagePart::image(image_ref), MessagePart::text(question)})};
}

std::vector<Message> caption_messages(const std::string& image_ref,
                                      const std::string& instruction,
                                      const PromptTemplate& tmpl) {
    std::string prompt = tmpl.render({{"instruction", instruction}});
    return {clients::user_parts({MessagePart::image(image_ref), MessagePart::text(std::move(prompt))})};
}

namespace {

std::string reason_code(const std::exception& e) {
    if (auto* be = dynamic_cast<const BackendError*>(&e)) {
        switch (be->kind) {
            case BackendError::Kind::Transport: return "TransportError";
            case BackendError::Kind::Auth: return "AuthError";
            case BackendError::Kind::BadResponseShape: return "BadResponseShape";
            case BackendError::Kind::UnknownFingerprint: return "UnknownFingerprint";
            case BackendError::Kind::UnparsableAnswer: return "UnparsableAnswer";
            case BackendError::Kind::UnsupportedLanguage: return "UnsupportedLanguage";
            case BackendError::Kind::ScriptError: return "ScriptError";
        }
    }
    if (auto* pe = dynamic_cast<const dsl::ParseError*>(&e)) {
        switch (pe->kind) {
            case dsl::ParseError::Kind::Syntax: return "SyntaxError";
            case dsl::ParseError::Kind::MissingResult: return "MissingResult";
            case dsl::ParseError::Kind::Reassignment: return "Reassignment";
            case dsl::ParseError::Kind::UseBeforeAssign: return "UseBeforeAssign";
        }
    }
    if (dynamic_cast<const TemplateError*>(&e)) return "TemplateError";
    if (dynamic_cast<const MalformedInstructionReply*>(&e)) return "MalformedInstructionReply";
    return "Error";
}

Prediction make_prediction(const VisualReasoningExample& ex, Strategy s) {
    Prediction p;
    p.example_id = ex.id;
    p.strategy = s;
    p.trace["stages"] = json::array();
    return p;
}

void add_stage(Prediction& p, json record) { p.trace["stages"].push_back(std::move(record)); }

void mark_failed(Prediction& p, const std::string& stage, const std::string& code,
                 const std::string& message) {
    p.verdict.reset();
    p.failed_reason = code;
    p.trace["failed_stage"] = stage;
    p.trace["failed_message"] = message;
}

// Translate to English unless the example already is; records a stage only
// when the translator actually ran.
std::string translate_stage(Prediction& p, const VisualReasoningExample& ex,
                            clients::Translator& translator) {
    if (ex.language == "en") {
        p.trace["translated_statement"] = ex.statement;
        return ex.statement;
    }
    std::string translated = translator.translate(ex.statement, ex.language, "en");
    add_stage(p, {{"stage", "translate"},
                  {"original_statement", ex.statement},
                  {"translated_statement", translated}});
    p.trace["translated_statement"] = translated;
    return translated;
}

}  // namespace

Prediction run_end_to_end(const VisualReasoningExample& ex, clients::ChatBackend& vision,
                          const PromptTemplate& tmpl) {
    Prediction p = make_prediction(ex, Strategy::EndToEnd);
    try {
        auto msgs = end_to_end_messages(ex, ex.statement, tmpl);
        std::string reply = vision.chat(msgs);
        add_stage(p, {{"stage", "vision"},
                      {"prompt", msgs.back().parts.back().content},
                      {"reply", reply}});
        p.verdict = clients::extract_label(reply);
    } catch (const std::exception& e) {
        mark_failed(p, "vision", reason_code(e), e.what());
    }
    return p;
}

Prediction run_translate_test(const VisualReasoningExample& ex, clients::Translator& translator,
                              clients::ChatBackend& vision, const PromptTemplate& tmpl) {
    Prediction p = make_prediction(ex, Strategy::TranslateTest);
    std::string translated;
    try {
        translated = translate_stage(p, ex, translator);
    } catch (const std::exception& e) {
        mark_failed(p, "translate", "TranslationError", e.what());
        return p;
    }
    try {
        auto msgs = end_to_end_messages(ex, translated, tmpl);
        std::string reply = vision.chat(msgs);
        add_stage(p, {{"stage", "vision"},
                      {"prompt", msgs.back().parts.back().content},
                      {"reply", reply}});
        p.verdict = clients::extract_label(reply);
    } catch (const std::exception& e) {
        mark_failed(p, "vision", reason_code(e), e.what());
    }
    return p;
}

Prediction run_visprog(const VisualReasoningExample& ex, clients::Translator& translator,
                       clients::ChatBackend& codegen, clients::ChatBackend& vqa,
                       const PromptTemplate& codegen_tmpl) {
    Prediction p = make_prediction(ex, Strategy::VisProg);
    std::string translated;
    try {
        translated = translate_stage(p, ex, translator);
    } catch (const std::exception& e) {
        mark_failed(p, "translate", "TranslationError", e.what());
        return p;
    }
    std::string program_text;
    try {
        std::string prompt =
            codegen_tmpl.render({{"statement", translated}, {"grammar", dsl_grammar_ebnf()}});
        std::string reply = codegen.chat({clients::user_text(prompt)});
        program_text = strip_code_fences(reply);
        add_stage(p, {{"stage", "codegen"}, {"prompt", prompt}, {"reply", reply}});
        p.trace["program_text"] = program_text;
    } catch (const std::exception& e) {
        mark_failed(p, "codegen", reason_code(e), e.what());
        return p;
    }
    try {
        dsl::Program program = dsl::parse_program(program_text);
        auto vqa_fn = [&vqa](const interp::VqaRequest& req) {
            return vqa.chat(vqa_messages(req.image_ref, req.question));
        };
        interp::ExecutionResult result = interp::execute(
            program, ex.left_image, ex.right_image, interp::ModuleRegistry::core(vqa_fn));
        json exec_records = json::array();
        {
            std::istringstream lines(interp::trace_to_jsonl(result.trace));
            std::string line;
            while (std::getline(lines, line))
                if (!line.empty()) exec_records.push_back(json::parse(line));
        }
        add_stage(p, {{"stage", "execute"}, {"records", exec_records}});
        if (!result.ok) {
            mark_failed(p, "execute", result.error_kind, result.error_message);
            return p;
        }
        p.verdict = result.verdict;
    } catch (const std::exception& e) {
        mark_failed(p, "execute", reason_code(e), e.what());
    }
    return p;
}

MalformedInstructionReply::MalformedInstructionReply(const std::string& message)
    : std::runtime_error(message) {}

std::pair<std::string, std::string> generate_targeted_instructions(
    const std::string& statement_en, clients::ChatBackend& text_backend,
    const PromptTemplate& tmpl) {
    std::string prompt = tmpl.render({{"statement", statement_en}});
    std::string reply = text_backend.chat({clients::user_text(prompt)});
    std::string left, right;
    std::istringstream lines(reply);
    std::string line;
    auto strip = [](std::string s) {
        auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    };
    while (std::getline(lines, line)) {
        std::string t = strip(line);
        if (t.rfind("LEFT:", 0) == 0) left = strip(t.substr(5));
        else if (t.rfind("RIGHT:", 0) == 0) right = strip(t.substr(6));
    }
    if (left.empty() || right.empty())
        throw MalformedInstructionReply("reply lacks nonempty LEFT:/RIGHT: lines: " +
                                        reply.substr(0, 120));
    return {left, right};
}

Prediction run_caption_reason(const VisualReasoningExample& ex, clients::Translator& translator,
                              clients::ChatBackend& instruction_backend,
                              clients::ChatBackend& caption_backend,
                              clients::ChatBackend& reasoning_backend,
                              const Templates& templates) {
    Prediction p = make_prediction(ex, Strategy::CaptionReason);
    std::string translated;
    try {
        translated = translate_stage(p, ex, translator);
    } catch (const std::exception& e) {
        mark_failed(p, "translate", "TranslationError", e.what());
        return p;
    }
    std::string left_instruction, right_instruction;
    try {
        std::tie(left_instruction, right_instruction) =
            generate_targeted_instructions(translated, instruction_backend,
                                           templates.instructions);
        add_stage(p, {{"stage", "instructions"},
                      {"left", left_instruction},
                      {"right", right_instruction}});
    } catch (const std::exception& e) {
        mark_failed(p, "instructions", reason_code(e), e.what());
        return p;
    }
    // one image per caption request
    std::string caption_left, caption_right;
    try {
        caption_left = caption_backend.chat(
            caption_messages(ex.left_image, left_instruction, templates.caption));
        add_stage(p, {{"stage", "caption_left"}, {"caption", caption_left}});
        caption_right = caption_backend.chat(
            caption_messages(ex.right_image, right_instruction, templates.caption));
        add_stage(p, {{"stage", "caption_right"}, {"caption", caption_right}});
    } catch (const std::exception& e) {
        mark_failed(p, "caption", reason_code(e), e.what());
        return p;
    }
    try {
        std::string prompt = templates.reasoning.render({{"statement", translated},
                                                         {"caption_left", caption_left},
                                                         {"caption_right", caption_right}});
        std::string reply = reasoning_backend.chat({clients::user_text(prompt)});
        add_stage(p, {{"stage", "reasoning"}, {"prompt", prompt}, {"reply", reply}});
        p.verdict = clients::extract_label(reply);
    } catch (const std::exception& e) {
        mark_failed(p, "reasoning", reason_code(e), e.what());
    }
    return p;
}

Prediction run_one(const VisualReasoningExample& ex, Strategy strategy,
                   const StrategyBackends& backends, const Templates& templates) {
    switch (strategy) {
        case Strategy::EndToEnd:
            return run_end_to_end(ex, *backends.vision, templates.end_to_end);
        case Strategy::TranslateTest:
            return run_translate_test(ex, *backends.translator, *backends.vision,
                                      templates.end_to_end);
        case Strategy::VisProg:
            return run_visprog(ex, *backends.translator, *backends.codegen, *backends.vqa,
                               templates.codegen);
        case Strategy::CaptionReason:
            return run_caption_reason(ex, *backends.translator, *backends.instruction,
                                      *backends.caption, *backends.reasoning, templates);
    }
    throw std::logic_error("bad strategy");
}

std::vector<Prediction> run_all(const Dataset& dataset, Strategy strategy,
                                const StrategyBackends& backends, const Templates& templates,
                                int max_in_flight) {
    if (max_in_flight < 1) max_in_flight = 1;
    std::vector<Prediction> results(dataset.examples.size());
    std::atomic<size_t> next{0};
    auto worker = [&] {
        while (true) {
            size_t i = next.fetch_add(1);
            if (i >= dataset.examples.size()) break;
            results[i] = run_one(dataset.examples[i], strategy, backends, templates);
        }
    };
    int n_threads = std::min<int>(max_in_flight, static_cast<int>(dataset.examples.size()));
    std::vector<std::thread> threads;
    for (int t = 0; t < std::max(1, n_threads); ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    std::stable_sort(results.begin(), results.end(),
                     [](const Prediction& a, const Prediction& b) {
                         return a.example_id < b.example_id;
                     });
    return results;
}

std::string predictions_to_jsonl(const std::vector<Prediction>& preds) {
    std::string out;
    for (const auto& p : preds) {
        json obj;
        obj["id"] = p.example_id;
        obj["strategy"] = strategy_name(p.strategy);
        if (p.verdict)
            obj["verdict"] = *p.verdict;
        else
            obj["verdict"] = nullptr;
        obj["failed_reason"] = p.failed_reason;
        obj["trace"] = p.trace;
        out += obj.dump();
        out += '\n';
    }
    return out;
}

std::vector<Prediction> predictions_from_jsonl(const std::string& text) {
    std::vector<Prediction> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json obj = json::parse(line);
        Prediction p;
        p.example_id = obj.at("id").get<std::string>();
        auto s = strategy_from_name(obj.value("strategy", "end_to_end"));
        p.strategy = s.value_or(Strategy::EndToEnd);
        if (obj.contains("verdict") && !obj["verdict"].is_null())
            p.verdict = obj["verdict"].get<bool>();
        p.failed_reason = obj.value("failed_reason", "");
        if (obj.contains("trace")) p.trace = obj["trace"];
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace mvr::pipelines
