#include "pensieve/index.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "pensieve/errors.hpp"

namespace pensieve {

using nlohmann::json;

std::vector<double> l2_normalize(std::span<const double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  if (sq == 0.0) throw ContractError("l2_normalize: zero vector");
  const double inv = 1.0 / std::sqrt(sq);
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x *= inv;
  return out;
}

std::vector<double> ensemble_embed(std::span<const double> semantic,
                                   std::span<const double> appearance) {
  std::vector<double> out = l2_normalize(semantic);
  const std::vector<double> app = l2_normalize(appearance);
  out.insert(out.end(), app.begin(), app.end());
  return out;
}

std::vector<std::string> tokenize_text(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (std::isspace(c)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    }
    // punctuation is stripped
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

namespace {

bool iequals_at(const std::string& s, std::size_t at, const std::string& phrase) {
  if (s.size() < at + phrase.size()) return false;
  for (std::size_t i = 0; i < phrase.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[at + i])) != phrase[i])
      return false;
  }
  return true;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

std::string narrativize(const std::string& question) {
  std::string q = trim(question);
  // longer phrases first so "is there" is never shadowed by "is the"
  static const std::string phrases[] = {"are there", "is there", "is this",
                                        "is the"};
  for (const std::string& phrase : phrases) {
    if (iequals_at(q, 0, phrase) &&
        (q.size() == phrase.size() ||
         std::isspace(static_cast<unsigned char>(q[phrase.size()])))) {
      q = "A photo of" + q.substr(phrase.size());
      break;
    }
  }
  std::size_t e = q.size();
  while (e > 0 && (q[e - 1] == '?' ||
                   std::isspace(static_cast<unsigned char>(q[e - 1]))))
    --e;
  return q.substr(0, e);
}

double bleu1(const std::vector<std::string>& candidate,
             const std::vector<std::string>& reference) {
  if (candidate.empty()) throw ContractError("bleu1: empty candidate");
  std::unordered_map<std::string, int> cand_counts, ref_counts;
  for (const std::string& t : candidate) ++cand_counts[t];
  for (const std::string& t : reference) ++ref_counts[t];
  long clipped = 0;
  for (const auto& [tok, n] : cand_counts) {
    auto it = ref_counts.find(tok);
    if (it != ref_counts.end()) clipped += std::min(n, it->second);
  }
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double precision = static_cast<double>(clipped) / c;
  const double bp = std::min(1.0, std::exp(1.0 - r / c));
  return precision * bp;
}

ReferenceIndex ReferenceIndex::build(std::vector<ReferenceRecord> records) {
  ReferenceIndex idx;
  if (!records.empty()) {
    idx.semantic_dim_ = records.front().semantic.size();
    idx.appearance_dim_ = records.front().appearance.size();
  }
  std::unordered_set<std::string> seen;
  for (ReferenceRecord& rec : records) {
    if (!seen.insert(rec.id).second)
      throw ContractError("build_index: duplicate id '" + rec.id + "'");
    if (rec.semantic.size() != idx.semantic_dim_ || idx.semantic_dim_ == 0)
      throw ContractError("build_index: semantic dimension mismatch at '" +
                          rec.id + "'");
    if (rec.appearance.size() != idx.appearance_dim_)
      throw ContractError("build_index: appearance dimension mismatch at '" +
                          rec.id + "'");
    rec.semantic = l2_normalize(rec.semantic);
    if (!rec.appearance.empty()) rec.appearance = l2_normalize(rec.appearance);
  }
  idx.records_ = std::move(records);
  idx.semantic_flat_.reserve(idx.records_.size() * idx.semantic_dim_);
  idx.appearance_flat_.reserve(idx.records_.size() * idx.appearance_dim_);
  for (const ReferenceRecord& rec : idx.records_) {
    for (double x : rec.semantic)
      idx.semantic_flat_.push_back(static_cast<float>(x));
    for (double x : rec.appearance)
      idx.appearance_flat_.push_back(static_cast<float>(x));
  }
  return idx;
}

const ReferenceRecord& ReferenceIndex::record_by_id(const std::string& id) const {
  for (const ReferenceRecord& rec : records_) {
    if (rec.id == id) return rec;
  }
  throw ContractError("index: unknown record id '" + id + "'");
}

std::vector<RetrievalResult> ReferenceIndex::search(
    std::span<const double> query, int k,
    const std::unordered_set<std::string>& blocklist,
    kernels::Mode mode) const {
  if (k < 1) throw ContractError("search: k must be >= 1");
  if (records_.empty()) return {};
  const bool ensemble =
      appearance_dim_ > 0 && query.size() == semantic_dim_ + appearance_dim_;
  if (!ensemble && query.size() != semantic_dim_)
    throw ContractError("search: query dimension mismatch");
  std::vector<double> sims(records_.size());
  kernels::inner_products(mode, semantic_flat_.data(), records_.size(),
                          semantic_dim_, query.data(), sims.data());
  if (ensemble) {
    std::vector<double> app_sims(records_.size());
    kernels::inner_products(mode, appearance_flat_.data(), records_.size(),
                            appearance_dim_, query.data() + semantic_dim_,
                            app_sims.data());
    for (std::size_t r = 0; r < sims.size(); ++r) sims[r] += app_sims[r];
  }
  std::vector<std::size_t> eligible;
  eligible.reserve(records_.size());
  for (std::size_t r = 0; r < records_.size(); ++r) {
    if (!blocklist.contains(records_[r].id)) eligible.push_back(r);
  }
  std::sort(eligible.begin(), eligible.end(),
            [&](std::size_t a, std::size_t b) {
              if (sims[a] != sims[b]) return sims[a] > sims[b];
              return records_[a].id < records_[b].id;
            });
  const std::size_t take =
      std::min<std::size_t>(static_cast<std::size_t>(k), eligible.size());
  std::vector<RetrievalResult> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    out.push_back({records_[eligible[i]].id, sims[eligible[i]], std::nullopt});
  }
  return out;
}

namespace {

constexpr char kMagic[] = {'P', 'N', 'S', 'V', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& s, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i)
    v = (v << 8) | static_cast<unsigned char>(s[at + static_cast<std::size_t>(i)]);
  return v;
}

std::uint64_t get_u64(const std::string& s, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i)
    v = (v << 8) | static_cast<unsigned char>(s[at + static_cast<std::size_t>(i)]);
  return v;
}

}  // namespace

void ReferenceIndex::save(const std::string& path) const {
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  put_u32(buf, static_cast<std::uint32_t>(semantic_dim_));
  put_u32(buf, static_cast<std::uint32_t>(appearance_dim_));
  put_u64(buf, records_.size());
  for (std::size_t r = 0; r < records_.size(); ++r) {
    for (std::size_t i = 0; i < semantic_dim_; ++i)
      put_u32(buf, std::bit_cast<std::uint32_t>(
                       semantic_flat_[r * semantic_dim_ + i]));
    for (std::size_t i = 0; i < appearance_dim_; ++i)
      put_u32(buf, std::bit_cast<std::uint32_t>(
                       appearance_flat_[r * appearance_dim_ + i]));
  }
  json footer;
  footer["records"] = json::array();
  for (const ReferenceRecord& rec : records_) {
    footer["records"].push_back({{"id", rec.id},
                                 {"captions", rec.captions},
                                 {"split", rec.split},
                                 {"image_ref", rec.image_ref}});
  }
  buf += footer.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw IoError("write failed for '" + path + "'");
}

ReferenceIndex ReferenceIndex::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  const std::string buf = ss.str();
  const std::size_t header = sizeof(kMagic) + 4 + 4 + 8;
  if (buf.size() < header || buf.compare(0, sizeof(kMagic), kMagic, sizeof(kMagic)) != 0)
    throw ContractError("index file '" + path + "': bad magic");
  const std::size_t d1 = get_u32(buf, sizeof(kMagic));
  const std::size_t d2 = get_u32(buf, sizeof(kMagic) + 4);
  const std::uint64_t count = get_u64(buf, sizeof(kMagic) + 8);
  const std::size_t payload = count * (d1 + d2) * 4;
  if (buf.size() < header + payload)
    throw ContractError("index file '" + path + "': truncated payload");
  json footer;
  try {
    footer = json::parse(buf.substr(header + payload));
  } catch (const json::exception& e) {
    throw ContractError("index file '" + path + "': bad footer: " + e.what());
  }
  if (!footer.contains("records") || !footer["records"].is_array() ||
      footer["records"].size() != count)
    throw ContractError("index file '" + path + "': footer/count mismatch");
  ReferenceIndex idx;
  idx.semantic_dim_ = d1;
  idx.appearance_dim_ = d2;
  idx.records_.resize(count);
  idx.semantic_flat_.resize(count * d1);
  idx.appearance_flat_.resize(count * d2);
  std::size_t at = header;
  for (std::size_t r = 0; r < count; ++r) {
    ReferenceRecord& rec = idx.records_[r];
    rec.semantic.resize(d1);
    rec.appearance.resize(d2);
    for (std::size_t i = 0; i < d1; ++i, at += 4) {
      const float f = std::bit_cast<float>(get_u32(buf, at));
      idx.semantic_flat_[r * d1 + i] = f;
      rec.semantic[i] = static_cast<double>(f);
    }
    for (std::size_t i = 0; i < d2; ++i, at += 4) {
      const float f = std::bit_cast<float>(get_u32(buf, at));
      idx.appearance_flat_[r * d2 + i] = f;
      rec.appearance[i] = static_cast<double>(f);
    }
    const json& meta = footer["records"][r];
    try {
      rec.id = meta.at("id").get<std::string>();
      rec.captions = meta.at("captions").get<std::vector<std::vector<std::string>>>();
      rec.split = meta.at("split").get<std::string>();
      rec.image_ref = meta.at("image_ref").get<std::string>();
    } catch (const json::exception& e) {
      throw ContractError("index file '" + path + "': bad record metadata: " +
                          e.what());
    }
  }
  return idx;
}

std::vector<ReferenceRecord> load_records_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::vector<ReferenceRecord> records;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw ContractError("records line " + std::to_string(lineno) +
                          ": " + e.what());
    }
    const auto fail = [&](const std::string& what) -> ContractError {
      return ContractError("records line " + std::to_string(lineno) + ": " + what);
    };
    if (!obj.is_object()) throw fail("expected an object");
    ReferenceRecord rec;
    if (!obj.contains("id") || !obj["id"].is_string())
      throw fail("missing string field 'id'");
    rec.id = obj["id"].get<std::string>();
    if (!obj.contains("semantic_embedding") || !obj["semantic_embedding"].is_array())
      throw fail("missing array field 'semantic_embedding'");
    try {
      rec.semantic = obj["semantic_embedding"].get<std::vector<double>>();
      if (obj.contains("appearance_embedding") && !obj["appearance_embedding"].is_null())
        rec.appearance = obj["appearance_embedding"].get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw fail(std::string("bad embedding: ") + e.what());
    }
    if (obj.contains("captions")) {
      if (!obj["captions"].is_array()) throw fail("'captions' must be an array");
      for (const json& cap : obj["captions"]) {
        if (!cap.is_string()) throw fail("captions must be strings");
        rec.captions.push_back(tokenize_text(cap.get<std::string>()));
      }
    }
    if (obj.contains("split")) {
      if (!obj["split"].is_string()) throw fail("'split' must be a string");
      rec.split = obj["split"].get<std::string>();
      if (rec.split != "train" && rec.split != "restval" && rec.split != "other")
        throw fail("split must be train, restval, or other");
    }
    if (obj.contains("image_ref")) {
      if (!obj["image_ref"].is_string()) throw fail("'image_ref' must be a string");
      rec.image_ref = obj["image_ref"].get<std::string>();
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<RetrievalResult> rerank_by_bleu1(
    std::vector<RetrievalResult> results,
    const std::vector<std::string>& query_tokens, const ReferenceIndex& index) {
  for (RetrievalResult& res : results) {
    const ReferenceRecord& rec = index.record_by_id(res.id);
    double best = 0.0;
    for (const std::vector<std::string>& caption : rec.captions) {
      best = std::max(best, bleu1(query_tokens, caption));
    }
    res.rerank_score = best;
  }
  std::stable_sort(results.begin(), results.end(),
                   [](const RetrievalResult& a, const RetrievalResult& b) {
                     return *a.rerank_score > *b.rerank_score;
                   });
  return results;
}

}  // namespace pensieve
