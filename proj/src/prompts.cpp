#include "cpretrieve/prompts.hpp"

#include "cpretrieve/error.hpp"

namespace cpretrieve {

namespace {

// Keep byte-identical to prompts/*.txt (checked by test_prompts).
constexpr std::string_view kNovice = R"PROMPT(You are given one or more MiniZinc models that represent a 
single classical constraint programming problem. Your task is to
read the code and explain what the problem is about using very 
simple language. If there are several models for the same 
problem, do not explain each one separately. Instead, focus on 
explaining the overall problem. Assume the reader does not have 
much background in programming or mathematics. In your answer 
please explain: 
The name of the problem.
What the problem is about in everyday terms.
What the main variables are and what they mean, using plain language.
What the basic restrictions or rules of the problem are, explained simply.
What the goal of the problem is (for example, what you want to minimize or maximize).
In your answer, do not include any introductory phrases (such as 
'Here is the explanation of the problem')
Here is the source code:
--------------
{source_code}
--------------)PROMPT";

constexpr std::string_view kIntermediate = R"PROMPT(You are experienced in constraint programming and familiar with 
MiniZinc. You are provided with one or more MiniZinc models 
representing a classic constraint programming problem. Your task 
is to identify the problem and explain it in clear, 
intermediate-level language. Assume the reader has some 
technical background but is not an expert. If there are several 
models for the same problem, do not explain each one separately. 
Instead, focus on explaining the overall problem. In your answer 
please explain:
The name of the problem.
A concise description of what the problem is about.
An explanation of the main decision variables and what they represent.
A description of the key constraints in plain language 
(avoid heavy mathematical notation).
An explanation of the problem's objective (what is being minimized or maximized).
In your answer, do not include any introductory phrases (such as 
'Here is the explanation of the problem')
Here is the source code of the model(s):
--------------
{source_code}
--------------)PROMPT";

constexpr std::string_view kExpert = R"PROMPT(You are an expert in high-level constraint modeling and solving discrete 
optimization problems. In particular, you know MiniZinc. You are provided 
with one or several MiniZinc models that represents a single classical 
problem in constraint programming. Your task is to identify what is the 
problem modeled and give a complete description of the problem to the user.
If there are several models for the same problem, do not explain each one 
separately. Instead, focus on explaining the overall problem.
This is the source code of the model(s):
--------------
{source_code}
--------------
In your answer please explain:
name: The name of the problem
description: A description of the problem in English
variables: A string containing the list of all the decision variables in 
mathematical notation, followed by an explanation of what they are in English
constraints: A string containing the list of all the constraints in 
mathematical notation, followed by an explanation of what they are in English
objective: The objective of the problem (minimize or maximize what value)
In your answer, do not include any introductory phrases 
(such as 'Here is the explanation of the problem'))PROMPT";

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
    std::size_t count = 0;
    for (auto pos = haystack.find(needle); pos != std::string_view::npos;
         pos = haystack.find(needle, pos + needle.size())) {
        ++count;
    }
    return count;
}

}  // namespace

PromptTemplate::PromptTemplate(ExpertiseLevel level, std::string text)
    : level_(level), text_(std::move(text)), slot_(text_.find(kSourceCodePlaceholder)) {
    const auto n = count_occurrences(text_, kSourceCodePlaceholder);
    if (n != 1) {
        fail(ErrorKind::Validation, "prompt template for " + std::string(level_code(level)) +
                                        " must contain " + std::string(kSourceCodePlaceholder) +
                                        " exactly once (found " + std::to_string(n) + ")");
    }
}

const PromptTemplate& PromptTemplate::builtin(ExpertiseLevel level) {
    static const PromptTemplate novice(ExpertiseLevel::Novice, std::string(kNovice));
    static const PromptTemplate intermediate(ExpertiseLevel::Intermediate, std::string(kIntermediate));
    static const PromptTemplate expert(ExpertiseLevel::Expert, std::string(kExpert));
    switch (level) {
        case ExpertiseLevel::Novice: return novice;
        case ExpertiseLevel::Intermediate: return intermediate;
        case ExpertiseLevel::Expert: return expert;
    }
    fail(ErrorKind::Validation, "unknown expertise level");
}

std::string PromptTemplate::render(std::string_view source_code) const {
    std::string out;
    out.reserve(text_.size() + source_code.size());
    out.append(text_, 0, slot_);
    out.append(source_code);
    out.append(text_, slot_ + kSourceCodePlaceholder.size());
    return out;
}

std::string concatenate_sources(const ModelEntry& entry) {
    std::string out;
    for (const auto& file : entry.source_files) {
        if (!out.empty()) out += "\n\n";
        out += "% file: ";
        out += file.filename;
        out += '\n';
        std::string_view content = file.content;
        while (!content.empty() && (content.back() == '\n' || content.back() == '\r')) {
            content.remove_suffix(1);
        }
        out += content;
    }
    return out;
}

std::string render_prompt(const ModelEntry& entry, ExpertiseLevel level) {
    return render_prompt(entry, PromptTemplate::builtin(level));
}

std::string render_prompt(const ModelEntry& entry, const PromptTemplate& tmpl) {
    validate_entry(entry);
    return tmpl.render(concatenate_sources(entry));
}

}  // namespace cpretrieve
