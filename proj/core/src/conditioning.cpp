#include "synthval/conditioning.hpp"

#include <algorithm>
#include <json.hpp>
#include <set>
#include <sstream>

#include "synthval/common.hpp"

namespace synthval::cond {

namespace {

std::vector<std::string> split_tokens(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

}  // namespace

PromptBank PromptBank::default_bank() {
    PromptBank bank;
    // Canonical grid prompt per spec: "<shape> <surface> <size> <prominence>
    // lesion". These come first so spec_to_prompt resolves to them.
    for (int i = 0; i < toy::kSpecCount; ++i) {
        const toy::LesionSpec spec = toy::spec_from_index(i);
        PromptEntry e;
        e.text = toy::to_string(spec.shape) + " " + toy::to_string(spec.surface) + " " +
                 toy::to_string(spec.size) + " " + toy::to_string(spec.prominence) + " lesion";
        e.is_negative = false;
        e.spec = spec;
        bank.entries_.push_back(std::move(e));
    }
    // Clinical-style aliases for specific grid cells.
    bank.entries_.push_back(
        {"sessile polyp 5-10mm", false,
         {toy::LesionShape::Sessile, toy::LesionSurface::Smooth, toy::LesionSize::Small,
          toy::LesionProminence::Conspicuous}});
    bank.entries_.push_back(
        {"flat lesion with unclear borders", false,
         {toy::LesionShape::Flat, toy::LesionSurface::Smooth, toy::LesionSize::Small,
          toy::LesionProminence::Subtle}});
    bank.entries_.push_back(
        {"large pedunculated polyp on a stalk", false,
         {toy::LesionShape::Pedunculated, toy::LesionSurface::Smooth, toy::LesionSize::Large,
          toy::LesionProminence::Conspicuous}});
    // Negative prompts: normal-tissue descriptions, mapped to no spec.
    bank.entries_.push_back({"healthy mucosa", true, {}});
    bank.entries_.push_back({"normal tissue background", true, {}});
    bank.rebuild_vocabulary();
    return bank;
}

PromptBank PromptBank::from_jsonl(const std::string& path) {
    const std::string text = read_text_file(path);
    PromptBank bank;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("prompt bank " + path + " line " + std::to_string(line_no) +
                              ": " + e.what());
        }
        PromptEntry e;
        if (!j.contains("text") || !j.contains("is_negative")) {
            throw ConfigError("prompt bank " + path + " line " + std::to_string(line_no) +
                              ": record needs text and is_negative");
        }
        e.text = j.at("text").get<std::string>();
        e.is_negative = j.at("is_negative").get<bool>();
        if (!e.is_negative) {
            e.spec.shape = toy::parse_shape(j.at("shape").get<std::string>());
            e.spec.surface = toy::parse_surface(j.at("surface").get<std::string>());
            e.spec.size = toy::parse_size(j.at("size").get<std::string>());
            e.spec.prominence = toy::parse_prominence(j.at("prominence").get<std::string>());
        }
        bank.entries_.push_back(std::move(e));
    }
    if (bank.entries_.empty()) {
        throw ConfigError("prompt bank " + path + " contains no prompts");
    }
    bank.rebuild_vocabulary();
    return bank;
}

void PromptBank::save_jsonl(const std::string& path) const {
    std::string out;
    for (const auto& e : entries_) {
        nlohmann::json j;
        j["text"] = e.text;
        j["is_negative"] = e.is_negative;
        if (!e.is_negative) {
            j["shape"] = toy::to_string(e.spec.shape);
            j["surface"] = toy::to_string(e.spec.surface);
            j["size"] = toy::to_string(e.spec.size);
            j["prominence"] = toy::to_string(e.spec.prominence);
        }
        out += j.dump();
        out += '\n';
    }
    write_text_file(path, out);
}

std::vector<std::string> PromptBank::positive_prompts() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) {
        if (!e.is_negative) out.push_back(e.text);
    }
    return out;
}

std::vector<std::string> PromptBank::negative_prompts() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) {
        if (e.is_negative) out.push_back(e.text);
    }
    return out;
}

bool PromptBank::contains(const std::string& prompt) const {
    for (const auto& e : entries_) {
        if (e.text == prompt) return true;
    }
    return false;
}

bool PromptBank::is_negative(const std::string& prompt) const {
    for (const auto& e : entries_) {
        if (e.text == prompt) return e.is_negative;
    }
    throw ConfigError("prompt not in bank: \"" + prompt + "\"");
}

toy::LesionSpec PromptBank::prompt_to_spec(const std::string& prompt) const {
    for (const auto& e : entries_) {
        if (e.text != prompt) continue;
        if (e.is_negative) {
            throw ConfigError("negative prompt names no lesion spec: \"" + prompt + "\"");
        }
        return e.spec;
    }
    throw ConfigError("prompt not in bank: \"" + prompt + "\"");
}

std::string PromptBank::spec_to_prompt(const toy::LesionSpec& spec) const {
    for (const auto& e : entries_) {
        if (!e.is_negative && e.spec == spec) return e.text;
    }
    throw ConfigError("no prompt in bank for spec " + toy::to_string(spec.shape) + "/" +
                      toy::to_string(spec.surface) + "/" + toy::to_string(spec.size) + "/" +
                      toy::to_string(spec.prominence));
}

std::vector<int> PromptBank::tokenize(const std::string& prompt) const {
    std::vector<int> ids;
    for (const auto& tok : split_tokens(prompt)) {
        const auto it = std::lower_bound(vocab_.begin(), vocab_.end(), tok);
        if (it == vocab_.end() || *it != tok) {
            throw ConfigError("token outside the bank vocabulary: \"" + tok + "\"");
        }
        ids.push_back(static_cast<int>(it - vocab_.begin()));
    }
    return ids;
}

void PromptBank::rebuild_vocabulary() {
    std::set<std::string> toks;
    for (const auto& e : entries_) {
        for (const auto& tok : split_tokens(e.text)) toks.insert(tok);
    }
    vocab_.assign(toks.begin(), toks.end());
}

TextEncoder::TextEncoder(int vocab_size, int d_text, Rng& rng)
    : vocab_size_(vocab_size), d_text_(d_text), table_(vocab_size + 1, d_text, rng) {
    if (vocab_size < 1 || d_text < 1) {
        throw ConfigError("text encoder needs vocab_size >= 1 and d_text >= 1");
    }
    register_module("table", table_);
}

Tensor TextEncoder::encode_ids(const std::vector<std::vector<int>>& token_ids) {
    // Row 0 of the table is the learned null embedding; vocabulary token i
    // lives at row i+1. An empty bag selects exactly the null row.
    std::vector<std::vector<int>> bags;
    bags.reserve(token_ids.size());
    for (const auto& ids : token_ids) {
        std::vector<int> bag;
        if (ids.empty()) {
            bag.push_back(0);
        } else {
            for (int id : ids) {
                if (id < 0 || id >= vocab_size_) {
                    throw ConfigError("token id outside the encoder vocabulary");
                }
                bag.push_back(id + 1);
            }
        }
        bags.push_back(std::move(bag));
    }
    return table_.forward_bags(bags);
}

Tensor TextEncoder::encode(const std::vector<std::string>& prompts, const PromptBank& bank) {
    std::vector<std::vector<int>> ids;
    ids.reserve(prompts.size());
    for (const auto& p : prompts) {
        if (p.empty()) {
            ids.emplace_back();
        } else {
            ids.push_back(bank.tokenize(p));
        }
    }
    return encode_ids(ids);
}

}  // namespace synthval::cond
