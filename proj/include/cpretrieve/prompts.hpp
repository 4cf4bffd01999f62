#pragma once

#include <string>
#include <string_view>

#include "cpretrieve/corpus.hpp"

namespace cpretrieve {

inline constexpr std::string_view kSourceCodePlaceholder = "{source_code}";

/// A description-generation prompt with exactly one `{source_code}` slot.
class PromptTemplate {
public:
    /// Throws Error{Validation} unless text contains the placeholder exactly once.
    PromptTemplate(ExpertiseLevel level, std::string text);

    /// The shipped prompt for level.
    static const PromptTemplate& builtin(ExpertiseLevel level);

    ExpertiseLevel level() const noexcept { return level_; }
    const std::string& text() const noexcept { return text_; }

    std::string render(std::string_view source_code) const;

private:
    ExpertiseLevel level_;
    std::string text_;
    std::size_t slot_;
};

/// Every source file in canonical order, each preceded by a `% file: <name>`
/// line, joined by a blank line. Trailing newlines of each file are dropped.
std::string concatenate_sources(const ModelEntry& entry);

/// Builtin template for level with the entry's sources inlined.
std::string render_prompt(const ModelEntry& entry, ExpertiseLevel level);
std::string render_prompt(const ModelEntry& entry, const PromptTemplate& tmpl);

}  // namespace cpretrieve
