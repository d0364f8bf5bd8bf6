#include "fineas/tokenize.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "fineas/data_model.hpp"
#include "fineas/io_utils.hpp"

namespace fineas::tok {

namespace {

// Splits a string into codepoint byte-chunks. Malformed sequences fall
// back to single bytes, keeping the function total.
std::vector<std::string> codepoints(const std::string& s) {
  std::vector<std::string> cps;
  cps.reserve(s.size());
  for (size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    size_t len = 1;
    if (c >= 0xF0) {
      len = 4;
    } else if (c >= 0xE0) {
      len = 3;
    } else if (c >= 0xC0) {
      len = 2;
    }
    if (i + len > s.size()) len = 1;
    cps.push_back(s.substr(i, len));
    i += len;
  }
  return cps;
}

bool is_special(const std::string& t) {
  return t == kPadToken || t == kUnkToken || t == kClsToken || t == kSepToken;
}

}  // namespace

Vocab::Vocab(VocabKind kind) : kind_(kind) {
  tokens_ = {kPadToken, kUnkToken, kClsToken, kSepToken};
  for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) {
    id_of_[tokens_[i]] = i;
  }
}

int Vocab::id_of(const std::string& token) const {
  const auto it = id_of_.find(token);
  return it == id_of_.end() ? -1 : it->second;
}

const std::string& Vocab::token_of(int id) const {
  if (id < 0 || id >= size()) raise(Errc::IdOutOfRange, std::to_string(id));
  return tokens_[id];
}

int Vocab::add(const std::string& token) {
  if (token.empty() || is_special(token)) return -1;
  if (id_of_.count(token)) return -1;
  const int id = size();
  tokens_.push_back(token);
  id_of_[token] = id;
  return id;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ostringstream out;
  for (const auto& t : tokens_) out << t << '\n';
  atomic_write_file(path, out.str());
}

Vocab Vocab::load(const std::filesystem::path& path, VocabKind kind) {
  const std::string content = read_file(path);
  std::istringstream in(content);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.size() < 4 || lines[0] != kPadToken || lines[1] != kUnkToken ||
      lines[2] != kClsToken || lines[3] != kSepToken) {
    raise(Errc::ParseError, path.string() + ": vocab must start with specials");
  }
  Vocab v(kind);
  for (size_t i = 4; i < lines.size(); ++i) {
    if (v.add(lines[i]) < 0) {
      raise(Errc::ParseError,
            path.string() + ": duplicate or invalid token at line " +
                std::to_string(i + 1));
    }
  }
  return v;
}

std::vector<std::string> subword_words(const std::string& text) {
  const std::string norm = normalize_headline(text);
  std::vector<std::string> words;
  std::istringstream in(norm);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

std::vector<std::string> word_tokens(const std::string& text) {
  const std::string norm = normalize_headline(text);
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };
  for (const auto& cp : codepoints(norm)) {
    if (cp.size() == 1) {
      const char c = cp[0];
      if (c == ' ') {
        flush();
        continue;
      }
      if (std::ispunct(static_cast<unsigned char>(c))) {
        flush();
        tokens.emplace_back(1, c);
        continue;
      }
      current.push_back(
          static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      current += cp;
    }
  }
  flush();
  return tokens;
}

namespace {

struct WordEntry {
  std::vector<std::string> symbols;
  int64_t freq = 0;
};

std::vector<std::string> word_symbols(const std::string& word) {
  const auto cps = codepoints(word);
  std::vector<std::string> symbols;
  symbols.reserve(cps.size());
  for (size_t i = 0; i < cps.size(); ++i) {
    symbols.push_back(i == 0 ? cps[i] : "##" + cps[i]);
  }
  return symbols;
}

std::string strip_continuation(const std::string& symbol) {
  if (symbol.size() > 2 && symbol[0] == '#' && symbol[1] == '#') {
    return symbol.substr(2);
  }
  return symbol;
}

}  // namespace

Vocab train_subword_vocab(const std::vector<std::string>& corpus,
                          int target_size) {
  if (corpus.empty()) raise(Errc::CorpusEmpty, "subword training corpus");
  if (target_size < 260) {
    raise(Errc::ConfigError, "target_size must be >= 260");
  }

  // Word frequency table in first-encounter order.
  std::vector<WordEntry> words;
  std::unordered_map<std::string, size_t> word_index;
  for (const auto& headline : corpus) {
    for (const auto& w : subword_words(headline)) {
      const auto it = word_index.find(w);
      if (it == word_index.end()) {
        word_index[w] = words.size();
        words.push_back({word_symbols(w), 1});
      } else {
        ++words[it->second].freq;
      }
    }
  }

  Vocab vocab(VocabKind::Subword);

  // Character symbols in first-encounter order.
  std::unordered_map<std::string, bool> seen_char;
  int char_symbols = 0;
  for (const auto& entry : words) {
    for (const auto& sym : entry.symbols) {
      if (!seen_char.count(sym)) {
        seen_char[sym] = true;
        ++char_symbols;
        vocab.add(sym);
      }
    }
  }

  int64_t budget = static_cast<int64_t>(target_size) - 4 -
                   std::max<int64_t>(256, char_symbols);
  using Pair = std::pair<std::string, std::string>;
  while (budget > 0) {
    // Count adjacent pairs; remember the scan position where each pair was
    // first seen (the deterministic tie-break).
    std::map<Pair, int64_t> counts;
    std::map<Pair, int64_t> first_seen;
    int64_t position = 0;
    for (const auto& entry : words) {
      for (size_t i = 0; i + 1 < entry.symbols.size(); ++i, ++position) {
        const Pair p{entry.symbols[i], entry.symbols[i + 1]};
        counts[p] += entry.freq;
        first_seen.emplace(p, position);
      }
    }
    if (counts.empty()) break;

    Pair best;
    int64_t best_count = 0;
    int64_t best_pos = 0;
    for (const auto& [pair, count] : counts) {
      const int64_t pos = first_seen[pair];
      if (count > best_count || (count == best_count && pos < best_pos)) {
        best = pair;
        best_count = count;
        best_pos = pos;
      }
    }
    if (best_count < 2) break;

    const std::string merged = best.first + strip_continuation(best.second);
    for (auto& entry : words) {
      auto& syms = entry.symbols;
      std::vector<std::string> out;
      out.reserve(syms.size());
      for (size_t i = 0; i < syms.size();) {
        if (i + 1 < syms.size() && syms[i] == best.first &&
            syms[i + 1] == best.second) {
          out.push_back(merged);
          i += 2;
        } else {
          out.push_back(syms[i]);
          ++i;
        }
      }
      syms = std::move(out);
    }
    vocab.add(merged);
    --budget;
  }
  return vocab;
}

Vocab train_word_vocab(const std::vector<std::string>& corpus, int max_size) {
  if (corpus.empty()) raise(Errc::CorpusEmpty, "word training corpus");
  if (max_size < 5) raise(Errc::ConfigError, "max_size must be >= 5");
  std::unordered_map<std::string, int64_t> counts;
  for (const auto& headline : corpus) {
    for (const auto& tok : word_tokens(headline)) ++counts[tok];
  }
  std::vector<std::pair<std::string, int64_t>> ranked(counts.begin(),
                                                      counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab vocab(VocabKind::Word);
  for (const auto& [token, count] : ranked) {
    if (vocab.size() >= max_size) break;
    vocab.add(token);
  }
  return vocab;
}

TokenSeq encode_subword(const Vocab& vocab, const std::string& text,
                        int max_len) {
  if (vocab.kind() != VocabKind::Subword) {
    raise(Errc::ConfigError, "encode_subword needs a subword vocab");
  }
  if (max_len < 2) raise(Errc::ConfigError, "max_len must be >= 2");

  std::vector<int> pieces;
  for (const auto& word : subword_words(text)) {
    const auto cps = codepoints(word);
    size_t start = 0;
    while (start < cps.size()) {
      // Greedy longest match, continuation pieces carry "##".
      int matched_id = -1;
      size_t matched_end = start;
      std::string prefix = start == 0 ? "" : "##";
      std::string candidate = prefix;
      for (size_t end = start; end < cps.size(); ++end) {
        candidate += cps[end];
        const int id = vocab.id_of(candidate);
        if (id >= 0) {
          matched_id = id;
          matched_end = end + 1;
        }
      }
      if (matched_id < 0) {
        pieces.push_back(kUnk);
        ++start;
      } else {
        pieces.push_back(matched_id);
        start = matched_end;
      }
    }
  }

  TokenSeq seq;
  seq.ids.reserve(max_len);
  seq.ids.push_back(kCls);
  const size_t piece_budget = static_cast<size_t>(max_len) - 2;
  for (size_t i = 0; i < pieces.size() && i < piece_budget; ++i) {
    seq.ids.push_back(pieces[i]);
  }
  seq.ids.push_back(kSep);
  seq.length = static_cast<int>(seq.ids.size());
  seq.ids.resize(max_len, kPad);
  return seq;
}

TokenSeq encode_word(const Vocab& vocab, const std::string& text,
                     int max_len) {
  if (vocab.kind() != VocabKind::Word) {
    raise(Errc::ConfigError, "encode_word needs a word vocab");
  }
  if (max_len < 1) raise(Errc::ConfigError, "max_len must be >= 1");
  const auto tokens = word_tokens(text);
  TokenSeq seq;
  seq.ids.reserve(max_len);
  for (size_t i = 0; i < tokens.size() && i < static_cast<size_t>(max_len);
       ++i) {
    const int id = vocab.id_of(tokens[i]);
    seq.ids.push_back(id < 0 ? kUnk : id);
  }
  seq.length = static_cast<int>(seq.ids.size());
  seq.ids.resize(max_len, kPad);
  return seq;
}

}  // namespace fineas::tok
