#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "lambert/doc_model.hpp"

namespace lambert::bpe {

// Byte-level BPE vocabulary. Ids: specials 0..4, the 256 byte tokens 5..260,
// merged tokens from 261 upward, dense in [0, size()).
inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kMaskId = 2;
inline constexpr int kClsId = 3;
inline constexpr int kSepId = 4;
inline constexpr int kNumSpecials = 5;
inline constexpr int kBaseVocab = kNumSpecials + 256;

struct BpeVocab {
  std::vector<std::pair<std::string, std::string>> merges;  // rank order
  std::vector<std::string> id_to_token;

  int size() const { return static_cast<int>(id_to_token.size()); }
  int token_id(const std::string& token) const;  // kUnkId if unknown
};

struct Subword {
  std::string text;
  int id = 0;
  int char_count = 0;
};

// Trains on an in-order stream of token texts. Most frequent pair merges
// first; equal counts break toward the lexicographically smaller pair.
// Deterministic for a fixed corpus order.
BpeVocab bpe_train(const std::vector<std::string>& corpus_tokens, int vocab_size);

// Precomputed merge-rank and id lookup tables; immutable and shareable
// across threads once constructed.
class BpeEncoder {
 public:
  explicit BpeEncoder(const BpeVocab& vocab);
  std::vector<Subword> encode(const std::string& text) const;
  const BpeVocab& vocab() const { return *vocab_; }

 private:
  const BpeVocab* vocab_;
  std::map<std::pair<std::string, std::string>, int> rank_;
  std::unordered_map<std::string, int> ids_;
};

// Splits text into subwords; concatenating the pieces reproduces the input.
// char_count counts UTF-8 characters (lead bytes), at least 1 per piece.
std::vector<Subword> bpe_encode(const std::string& text, const BpeVocab& vocab);

struct EncodedDoc {
  std::vector<int> ids;
  std::vector<doc::BBox> boxes;
  std::vector<int> orig_index;  // subword -> original token index
};

// bpe_encode per token plus proportional box interpolation; the id and box
// sequences always have equal length.
EncodedDoc encode_document(const doc::Document& doc, const BpeEncoder& encoder);
EncodedDoc encode_document(const doc::Document& doc, const BpeVocab& vocab);

void save_vocab(const std::string& path, const BpeVocab& vocab);
BpeVocab load_vocab(const std::string& path);

}  // namespace lambert::bpe
