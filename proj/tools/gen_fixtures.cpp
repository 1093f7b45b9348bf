// Regenerates the committed script fixtures under data/scripts/ from the
// bundled synthetic dataset. Run from the repository root:
//   build/gen_fixtures data
#include <iostream>
#include <set>
#include <string>

#include "mvr/clients.hpp"
#include "mvr/dataset.hpp"
#include "mvr/pipelines.hpp"

using namespace mvr;

int main(int argc, char** argv) {
    std::string data_dir = argc > 1 ? argv[1] : "data";
    Dataset ds = load_dataset(data_dir + "/synthetic.jsonl");

    // Vision replies for end_to_end / translate_test: agree with gold on all
    // but three examples, so scripted accuracy is 17/20.
    const std::set<std::string> flipped = {"en-3", "id-1", "zh-2"};
    pipelines::Templates templates = pipelines::Templates::defaults();
    clients::ScriptedBackend vision(/*strict=*/true);
    for (const auto& ex : ds.examples) {
        bool reply = flipped.count(ex.id) ? !ex.gold_label : ex.gold_label;
        auto msgs = pipelines::end_to_end_messages(ex, ex.statement, templates.end_to_end);
        vision.add_reply(msgs, reply ? "True. The statement matches the image pair."
                                     : "False. The statement does not match the image pair.");
    }
    vision.save(data_dir + "/scripts/vision.jsonl");

    // VQA replies for the bundled bedroom program executed with
    // --left left.jpg --right right.jpg: yes for LEFT, no for RIGHT.
    clients::ScriptedBackend vqa(/*strict=*/true);
    vqa.add_reply(pipelines::vqa_messages("left.jpg", "Is there anyone in the bedroom?"), "Yes.");
    vqa.add_reply(pipelines::vqa_messages("right.jpg", "Is there anyone in the bedroom?"), "No.");
    vqa.save(data_dir + "/scripts/vqa_bedroom.jsonl");

    std::cout << "wrote " << data_dir << "/scripts/vision.jsonl and "
              << data_dir << "/scripts/vqa_bedroom.jsonl\n";
    return 0;
}
