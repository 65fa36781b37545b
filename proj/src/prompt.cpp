#include "sfa/prompt.hpp"

#include <fstream>
#include <sstream>

#include "sfa/error.hpp"

namespace sfa {

std::string PromptTemplate::render(std::string_view question) const {
    static constexpr std::string_view kSlot = "{question}";
    std::string out;
    out.reserve(text.size() + question.size());
    std::size_t pos = 0;
    for (;;) {
        const auto hit = text.find(kSlot, pos);
        if (hit == std::string::npos) break;
        out.append(text, pos, hit - pos);
        out.append(question);
        pos = hit + kSlot.size();
    }
    out.append(text, pos);
    return out;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::configuration, "cannot read prompt template " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return PromptTemplate{ss.str()};
}

PromptTemplate PromptTemplate::default_relevance() {
    return PromptTemplate{
        "You are shown one region cropped from a video frame.\n"
        "Question: {question}\n"
        "Rate how useful the visible objects and scene text in this region are for answering the question. "
        "Reply with a single number between 0 and 1, where 0 means unrelated and 1 means the region "
        "contains the answer."};
}

PromptTemplate PromptTemplate::default_answer() {
    return PromptTemplate{
        "The frames above are the regions of a video most relevant to the question, enlarged so their text "
        "is legible. Read the scene text carefully.\n"
        "Question: {question}\n"
        "Answer with a short phrase taken from the video text where possible, and nothing else."};
}

PromptTemplate PromptTemplate::default_detection() {
    return PromptTemplate{
        "Locate every line of scene text in this image. Output one JSON object per line of text, one per "
        "output line, in the form {\"bbox\": [x0, y0, x1, y1], \"confidence\": c, \"text\": \"...\"} using "
        "pixel coordinates of the image. Output nothing else. If there is no text, output nothing."};
}

}  // namespace sfa
