#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace sfa {

/// Plain-text prompt with `{question}` placeholders.
struct PromptTemplate {
    std::string text;

    std::string render(std::string_view question) const;

    static PromptTemplate load(const std::filesystem::path& path);
    static PromptTemplate default_relevance();
    static PromptTemplate default_answer();
    static PromptTemplate default_detection();
};

}  // namespace sfa
