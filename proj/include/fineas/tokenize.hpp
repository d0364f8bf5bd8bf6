#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "fineas/errors.hpp"

namespace fineas::tok {

enum class VocabKind { Subword, Word };

// Special token ids are fixed and occupy the first four slots.
inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kCls = 2;
inline constexpr int kSep = 3;

inline constexpr const char* kPadToken = "[PAD]";
inline constexpr const char* kUnkToken = "[UNK]";
inline constexpr const char* kClsToken = "[CLS]";
inline constexpr const char* kSepToken = "[SEP]";

class Vocab {
 public:
  explicit Vocab(VocabKind kind);

  VocabKind kind() const { return kind_; }
  int size() const { return static_cast<int>(tokens_.size()); }

  // Returns the token id, or -1 if absent.
  int id_of(const std::string& token) const;
  const std::string& token_of(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Appends a learned token; returns its id. Tokens equal to a special
  // string or already present are rejected with -1.
  int add(const std::string& token);

  // One token per line, line number = id, specials first. The byte stream
  // is identical across platforms. `kind` is not stored in the file; it is
  // supplied by the caller (the run config knows which tokenizer a vocab
  // belongs to).
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path, VocabKind kind);

 private:
  VocabKind kind_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> id_of_;
};

struct TokenSeq {
  std::vector<int> ids;  // padded to a fixed length
  int length = 0;        // token count before padding
};

// Desk-scale substitute for a pretrained Wordpiece vocabulary: BPE-style
// merge training over the corpus, rendered with the "##" continuation
// convention.
//
// Procedure (deterministic):
//   1. Normalize each headline and split on whitespace into words; a word
//      becomes the symbol sequence [c0, ##c1, ##c2, ...] over its
//      codepoints.
//   2. Count adjacent symbol pairs weighted by word frequency. Merge the
//      most frequent pair; ties break toward the pair first encountered in
//      corpus scan order. A merge concatenates the right symbol's content
//      onto the left symbol, keeping the left symbol's "##" status.
//   3. Stop when the merge budget is exhausted or no pair occurs twice.
//
// The merge budget is target_size - 4 - max(256, distinct character
// symbols), so the final vocabulary (specials + character symbols +
// merged symbols) never exceeds target_size, and target_size = 260 on an
// ASCII corpus yields a character-level vocabulary with zero merges.
Vocab train_subword_vocab(const std::vector<std::string>& corpus,
                          int target_size);

// Word vocabulary for the recurrent baseline: most frequent words first,
// ties lexicographic, capped at max_size entries including specials.
Vocab train_word_vocab(const std::vector<std::string>& corpus, int max_size);

// Greedy longest-match-first segmentation per word; characters with no
// matching piece emit UNK and advance one codepoint. Result is
// [CLS] + pieces + [SEP] truncated to max_len (SEP always last), padded
// with PAD. length counts real tokens (CLS/SEP included).
TokenSeq encode_subword(const Vocab& vocab, const std::string& text,
                        int max_len);

// ASCII-lowercases, splits on Unicode whitespace, splits ASCII punctuation
// off as separate tokens. No CLS/SEP. OOV words map to UNK.
TokenSeq encode_word(const Vocab& vocab, const std::string& text,
                     int max_len);

// The word tokenizer's split, exposed for word-count histograms (lengths
// are measured before any truncation).
std::vector<std::string> word_tokens(const std::string& text);

// Subword pre-tokenization: normalized text split on whitespace.
std::vector<std::string> subword_words(const std::string& text);

}  // namespace fineas::tok
