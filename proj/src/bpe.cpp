#include "lambert/bpe.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "lambert/io.hpp"

namespace lambert::bpe {

namespace {

const char* kSpecialNames[kNumSpecials] = {"<pad>", "<unk>", "<mask>", "<cls>", "<sep>"};

int utf8_char_count(const std::string& s) {
  int n = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++n;
  return std::max(n, 1);
}

std::string escape(const std::string& s) {
  std::string out;
  for (unsigned char c : s) {
    if (c < 0x20 || c == 0x7f || c == '\t' || c == '\\') {
      char buf[5];
      std::snprintf(buf, sizeof(buf), "\\x%02x", c);
      out += buf;
    } else {
      out += static_cast<char>(c);
    }
  }
  return out;
}

std::string unescape(const std::string& s) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 3 < s.size() && s[i + 1] == 'x') {
      out += static_cast<char>(std::stoi(s.substr(i + 2, 2), nullptr, 16));
      i += 3;
    } else {
      out += s[i];
    }
  }
  return out;
}

}  // namespace

int BpeVocab::token_id(const std::string& token) const {
  for (int i = 0; i < size(); ++i)
    if (id_to_token[static_cast<size_t>(i)] == token) return i;
  return kUnkId;
}

BpeVocab bpe_train(const std::vector<std::string>& corpus_tokens, int vocab_size) {
  if (vocab_size < kBaseVocab)
    throw std::invalid_argument("bpe_train: vocab_size must be at least " +
                                std::to_string(kBaseVocab));
  if (corpus_tokens.empty()) throw std::invalid_argument("bpe_train: empty corpus");

  BpeVocab vocab;
  vocab.id_to_token.reserve(static_cast<size_t>(vocab_size));
  for (const char* s : kSpecialNames) vocab.id_to_token.emplace_back(s);
  for (int b = 0; b < 256; ++b) vocab.id_to_token.emplace_back(1, static_cast<char>(b));

  // unique words with frequencies, in first-appearance order
  std::vector<std::pair<std::string, long>> words;
  {
    std::unordered_map<std::string, size_t> index;
    for (const auto& w : corpus_tokens) {
      if (w.empty()) continue;
      auto it = index.find(w);
      if (it == index.end()) {
        index.emplace(w, words.size());
        words.emplace_back(w, 1);
      } else {
        ++words[it->second].second;
      }
    }
  }
  if (words.empty()) throw std::invalid_argument("bpe_train: empty corpus");

  // per-word symbol sequences (symbols are token strings)
  std::vector<std::vector<std::string>> symbols(words.size());
  for (size_t i = 0; i < words.size(); ++i)
    for (char c : words[i].first) symbols[i].emplace_back(1, c);

  std::map<std::pair<std::string, std::string>, long> pair_counts;
  auto count_word = [&](size_t wi, long sign) {
    const auto& sym = symbols[wi];
    const long f = words[wi].second * sign;
    for (size_t j = 0; j + 1 < sym.size(); ++j) pair_counts[{sym[j], sym[j + 1]}] += f;
  };
  for (size_t i = 0; i < words.size(); ++i) count_word(i, +1);

  std::unordered_map<std::string, int> known;
  for (int i = 0; i < vocab.size(); ++i) known[vocab.id_to_token[static_cast<size_t>(i)]] = i;

  while (vocab.size() < vocab_size) {
    // best pair: max count, ties to the lexicographically smaller (left, right)
    const std::pair<std::string, std::string>* best = nullptr;
    long best_count = 0;
    for (const auto& [pair, count] : pair_counts) {
      if (count <= 0) continue;
      if (count > best_count || (count == best_count && best && pair < *best)) {
        best = &pair;
        best_count = count;
      }
    }
    if (!best) break;  // nothing left to merge
    const auto merged_pair = *best;
    const std::string merged = merged_pair.first + merged_pair.second;

    for (size_t wi = 0; wi < words.size(); ++wi) {
      auto& sym = symbols[wi];
      bool contains = false;
      for (size_t j = 0; j + 1 < sym.size(); ++j)
        if (sym[j] == merged_pair.first && sym[j + 1] == merged_pair.second) {
          contains = true;
          break;
        }
      if (!contains) continue;
      count_word(wi, -1);
      std::vector<std::string> next;
      next.reserve(sym.size());
      for (size_t j = 0; j < sym.size(); ++j) {
        if (j + 1 < sym.size() && sym[j] == merged_pair.first &&
            sym[j + 1] == merged_pair.second) {
          next.push_back(merged);
          ++j;
        } else {
          next.push_back(sym[j]);
        }
      }
      sym = std::move(next);
      count_word(wi, +1);
    }
    pair_counts.erase(merged_pair);

    vocab.merges.push_back(merged_pair);
    if (!known.count(merged)) {
      known[merged] = vocab.size();
      vocab.id_to_token.push_back(merged);
    }
  }
  return vocab;
}

BpeEncoder::BpeEncoder(const BpeVocab& vocab) : vocab_(&vocab) {
  for (size_t r = 0; r < vocab.merges.size(); ++r)
    rank_.emplace(vocab.merges[r], static_cast<int>(r));
  ids_.reserve(static_cast<size_t>(vocab.size()));
  for (int i = 0; i < vocab.size(); ++i) ids_[vocab.id_to_token[static_cast<size_t>(i)]] = i;
}

std::vector<Subword> BpeEncoder::encode(const std::string& text) const {
  std::vector<Subword> out;
  if (text.empty()) return out;

  std::vector<std::string> sym;
  sym.reserve(text.size());
  for (char c : text) sym.emplace_back(1, c);

  while (sym.size() > 1) {
    int best_rank = -1;
    for (size_t j = 0; j + 1 < sym.size(); ++j) {
      auto it = rank_.find({sym[j], sym[j + 1]});
      if (it != rank_.end() && (best_rank < 0 || it->second < best_rank)) best_rank = it->second;
    }
    if (best_rank < 0) break;
    const auto& mp = vocab_->merges[static_cast<size_t>(best_rank)];
    std::vector<std::string> next;
    next.reserve(sym.size());
    for (size_t j = 0; j < sym.size(); ++j) {
      if (j + 1 < sym.size() && sym[j] == mp.first && sym[j + 1] == mp.second) {
        next.push_back(mp.first + mp.second);
        ++j;
      } else {
        next.push_back(sym[j]);
      }
    }
    sym = std::move(next);
  }

  out.reserve(sym.size());
  for (auto& s : sym) {
    Subword sw;
    auto it = ids_.find(s);
    sw.id = it == ids_.end() ? kUnkId : it->second;
    sw.char_count = utf8_char_count(s);
    sw.text = std::move(s);
    out.push_back(std::move(sw));
  }
  return out;
}

std::vector<Subword> bpe_encode(const std::string& text, const BpeVocab& vocab) {
  return BpeEncoder(vocab).encode(text);
}

EncodedDoc encode_document(const doc::Document& document, const BpeEncoder& encoder) {
  EncodedDoc enc;
  for (size_t ti = 0; ti < document.tokens.size(); ++ti) {
    const auto& tok = document.tokens[ti];
    auto pieces = encoder.encode(tok.text);
    if (pieces.empty()) continue;
    std::vector<int> counts;
    counts.reserve(pieces.size());
    for (const auto& p : pieces) counts.push_back(p.char_count);
    auto boxes = doc::interpolate_subword_boxes(tok.box, counts);
    for (size_t i = 0; i < pieces.size(); ++i) {
      enc.ids.push_back(pieces[i].id);
      enc.boxes.push_back(boxes[i]);
      enc.orig_index.push_back(static_cast<int>(ti));
    }
  }
  return enc;
}

EncodedDoc encode_document(const doc::Document& document, const BpeVocab& vocab) {
  return encode_document(document, BpeEncoder(vocab));
}

void save_vocab(const std::string& path, const BpeVocab& vocab) {
  std::ostringstream out;
  out << "merges " << vocab.merges.size() << "\n";
  for (const auto& [l, r] : vocab.merges) out << escape(l) << "\t" << escape(r) << "\n";
  out << "tokens " << vocab.id_to_token.size() << "\n";
  for (size_t i = 0; i < vocab.id_to_token.size(); ++i)
    out << escape(vocab.id_to_token[i]) << "\t" << i << "\n";
  atomic_write_file(path, out.str());
}

BpeVocab load_vocab(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string kw;
  size_t count = 0;
  if (!(in >> kw >> count) || kw != "merges")
    throw std::runtime_error("malformed vocab file " + path);
  in.ignore(1);
  BpeVocab vocab;
  std::string line;
  for (size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("vocab file truncated: " + path);
    const size_t tab = line.find('\t');
    if (tab == std::string::npos) throw std::runtime_error("malformed merge line: " + line);
    vocab.merges.emplace_back(unescape(line.substr(0, tab)), unescape(line.substr(tab + 1)));
  }
  if (!(in >> kw >> count) || kw != "tokens")
    throw std::runtime_error("malformed vocab file " + path);
  in.ignore(1);
  vocab.id_to_token.resize(count);
  for (size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("vocab file truncated: " + path);
    const size_t tab = line.find('\t');
    if (tab == std::string::npos) throw std::runtime_error("malformed token line: " + line);
    const size_t id = std::stoul(line.substr(tab + 1));
    if (id >= count) throw std::runtime_error("vocab id out of range in " + path);
    vocab.id_to_token[id] = unescape(line.substr(0, tab));
  }
  return vocab;
}

}  // namespace lambert::bpe
