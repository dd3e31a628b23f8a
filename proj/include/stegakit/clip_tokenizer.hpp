#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace stegakit {

struct TokenizerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Byte-pair-encoding tokenizer in the CLIP dialect: lowercased words, the
// final character of each word tagged with "</w>", merges applied lowest rank
// first, sequences framed by <|startoftext|>/<|endoftext|> and padded to the
// context length with the end token.
//
// Limitation (documented): input is restricted to printable ASCII. For that
// range the reference byte-to-unicode table is the identity, so results match
// the reference tokenizer; non-ASCII prompts are rejected rather than
// silently mis-tokenized.
class ClipTokenizer {
  public:
    static constexpr int kContextLength = 77;

    static ClipTokenizer from_files(const std::string& vocab_path, const std::string& merges_path) {
        ClipTokenizer t;

        std::ifstream vf(vocab_path);
        if (!vf) throw TokenizerError("cannot open vocab file: " + vocab_path);
        nlohmann::json vocab = nlohmann::json::parse(vf, nullptr, true, false);
        if (!vocab.is_object()) throw TokenizerError("vocab file is not a JSON object: " + vocab_path);
        for (auto it = vocab.begin(); it != vocab.end(); ++it)
            t.vocab_[it.key()] = it.value().get<int>();

        std::ifstream mf(merges_path);
        if (!mf) throw TokenizerError("cannot open merges file: " + merges_path);
        std::string line;
        int rank = 0;
        while (std::getline(mf, line)) {
            if (line.empty() || line[0] == '#') continue;
            const auto sp = line.find(' ');
            if (sp == std::string::npos) throw TokenizerError("malformed merges line: " + line);
            t.merge_rank_[{line.substr(0, sp), line.substr(sp + 1)}] = rank++;
        }

        t.start_token_ = t.lookup("<|startoftext|>");
        t.end_token_ = t.lookup("<|endoftext|>");
        return t;
    }

    int start_token() const { return start_token_; }
    int end_token() const { return end_token_; }

    // Tokens for one whitespace-delimited word (no frame tokens).
    std::vector<int> encode_word(const std::string& word) const {
        std::vector<std::string> symbols;
        for (size_t i = 0; i < word.size(); ++i) symbols.emplace_back(1, word[i]);
        if (symbols.empty()) return {};
        symbols.back() += "</w>";

        while (symbols.size() > 1) {
            int best_rank = -1;
            size_t best_i = 0;
            for (size_t i = 0; i + 1 < symbols.size(); ++i) {
                auto it = merge_rank_.find({symbols[i], symbols[i + 1]});
                if (it != merge_rank_.end() && (best_rank < 0 || it->second < best_rank)) {
                    best_rank = it->second;
                    best_i = i;
                }
            }
            if (best_rank < 0) break;
            symbols[best_i] += symbols[best_i + 1];
            symbols.erase(symbols.begin() + static_cast<long>(best_i) + 1);
        }

        std::vector<int> ids;
        ids.reserve(symbols.size());
        for (const auto& s : symbols) ids.push_back(lookup(s));
        return ids;
    }

    // Full framed sequence of length context_length. Overlong prompts are
    // truncated; `truncated` (when given) reports that, and the caller should
    // warn the user.
    std::vector<int> encode(const std::string& text, int context_length = kContextLength,
                            bool* truncated = nullptr) const {
        if (truncated) *truncated = false;
        std::vector<int> ids{start_token_};
        for (const std::string& word : split_words(text)) {
            auto w = encode_word(word);
            ids.insert(ids.end(), w.begin(), w.end());
        }
        if (static_cast<int>(ids.size()) > context_length - 1) {
            ids.resize(static_cast<size_t>(context_length - 1));
            if (truncated) *truncated = true;
        }
        ids.push_back(end_token_);
        while (static_cast<int>(ids.size()) < context_length) ids.push_back(end_token_);
        return ids;
    }

    static std::vector<std::string> split_words(const std::string& text) {
        std::vector<std::string> words;
        std::string cur;
        for (char c : text) {
            const auto uc = static_cast<unsigned char>(c);
            if (uc > 0x7e || (uc < 0x20 && !std::isspace(uc)))
                throw TokenizerError("non-ASCII byte in prompt; this build tokenizes ASCII only");
            if (std::isspace(uc)) {
                if (!cur.empty()) words.push_back(std::move(cur));
                cur.clear();
            } else {
                cur += static_cast<char>(std::tolower(uc));
            }
        }
        if (!cur.empty()) words.push_back(std::move(cur));
        return words;
    }

  private:
    int lookup(const std::string& token) const {
        auto it = vocab_.find(token);
        if (it == vocab_.end()) throw TokenizerError("token not in vocabulary: '" + token + "'");
        return it->second;
    }

    std::map<std::string, int> vocab_;
    std::map<std::pair<std::string, std::string>, int> merge_rank_;
    int start_token_ = 0;
    int end_token_ = 0;
};

}  // namespace stegakit
