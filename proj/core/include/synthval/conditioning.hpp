#pragma once

#include <string>
#include <vector>

#include "synthval/nn.hpp"
#include "synthval/rng.hpp"
#include "synthval/tensor.hpp"
#include "synthval/toy.hpp"

namespace synthval::cond {

/// One prompt record. Positive prompts name exactly one lesion spec; negative
/// prompts describe normal tissue and map to no spec.
struct PromptEntry {
    std::string text;
    bool is_negative = false;
    toy::LesionSpec spec;  // meaningful only when !is_negative
};

/// The finite bank of conditioning texts. Tokenization is whitespace-based
/// and the vocabulary is closed over the bank, so every bank prompt encodes
/// without unknown tokens and any drift is caught loudly.
class PromptBank {
public:
    /// Canonical grid: one positive prompt per lesion spec (all 24), clinical
    /// aliases for a few of them, and negative normal-tissue prompts.
    static PromptBank default_bank();
    static PromptBank from_jsonl(const std::string& path);
    void save_jsonl(const std::string& path) const;

    const std::vector<PromptEntry>& entries() const { return entries_; }
    std::vector<std::string> positive_prompts() const;
    std::vector<std::string> negative_prompts() const;

    bool contains(const std::string& prompt) const;
    bool is_negative(const std::string& prompt) const;

    /// Spec named by a positive prompt; throws ConfigError for negative or
    /// unknown prompts.
    toy::LesionSpec prompt_to_spec(const std::string& prompt) const;

    /// Canonical prompt text for a spec (the grid entry, never an alias).
    std::string spec_to_prompt(const toy::LesionSpec& spec) const;

    /// Sorted unique whitespace tokens over all entries.
    const std::vector<std::string>& vocabulary() const { return vocab_; }

    /// Token ids into vocabulary(); throws ConfigError on a token outside it.
    std::vector<int> tokenize(const std::string& prompt) const;

private:
    void rebuild_vocabulary();
    std::vector<PromptEntry> entries_;
    std::vector<std::string> vocab_;
};

/// Learned bag-of-tokens text encoder. A prompt embeds as the sum of its
/// token embeddings; the empty prompt embeds as a dedicated learned null row
/// (the unconditional branch of guided sampling).
class TextEncoder : public nn::Module {
public:
    TextEncoder(int vocab_size, int d_text, Rng& rng);

    /// [N, d_text]; prompts must already be token ids (empty bag = null).
    Tensor encode_ids(const std::vector<std::vector<int>>& token_ids);

    /// Convenience: tokenize against `bank` then embed. "" -> null embedding.
    Tensor encode(const std::vector<std::string>& prompts, const PromptBank& bank);

    int d_text() const { return d_text_; }
    int vocab_size() const { return vocab_size_; }

private:
    int vocab_size_;
    int d_text_;
    nn::Embedding table_;
};

}  // namespace synthval::cond
