#include "viba/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "viba/errors.hpp"

namespace viba {

namespace {

bool tag_parts(const std::string& tag, char& mark, std::string_view& type) {
  if (tag == "O") {
    mark = 'O';
    type = {};
    return true;
  }
  if (tag.size() < 3 || tag[1] != '-') return false;
  mark = tag[0];
  if (mark != 'B' && mark != 'I' && mark != 'E' && mark != 'S') return false;
  type = std::string_view(tag).substr(2);
  return !type.empty();
}

bool continues(const std::string& prev, std::string_view type) {
  char m;
  std::string_view t;
  if (!tag_parts(prev, m, t)) return false;
  return (m == 'B' || m == 'I') && t == type;
}

}  // namespace

bool is_valid_bio(const TagSequence& tags) {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    char mark;
    std::string_view type;
    if (!tag_parts(tags[i], mark, type)) return false;
    if (mark == 'E' || mark == 'S') return false;
    if (mark == 'I' && (i == 0 || !continues(tags[i - 1], type))) return false;
  }
  return true;
}

TagSequence repair_bio(TagSequence tags) {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    char mark;
    std::string_view type;
    if (!tag_parts(tags[i], mark, type))
      throw ValidationError("unrecognized tag '" + tags[i] + "'");
    if (mark == 'S') {
      tags[i] = "B-" + std::string(type);
      continue;
    }
    if (mark == 'E') mark = 'I';  // falls through to the continuation check
    if (mark == 'I') {
      if (i == 0 || !continues(tags[i - 1], type))
        tags[i] = "B-" + std::string(type);
      else
        tags[i] = "I-" + std::string(type);
    }
  }
  return tags;
}

std::vector<Entity> decode_entities(const TagSequence& tags) {
  std::vector<Entity> out;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    char mark;
    std::string_view type;
    if (!tag_parts(tags[i], mark, type))
      throw ValidationError("unrecognized tag '" + tags[i] + "'");
    if (mark == 'B') {
      out.push_back(Entity{std::string(type), i, i + 1, {}, {}});
    } else if (mark == 'I') {
      // Valid input guarantees a compatible predecessor; tolerate strays
      // the same way repair_bio would.
      if (!out.empty() && out.back().end == i && out.back().type == type)
        out.back().end = i + 1;
      else
        out.push_back(Entity{std::string(type), i, i + 1, {}, {}});
    }
  }
  return out;
}

std::vector<Entity> decode_entities(std::span<const std::string> tokens,
                                    const TagSequence& tags) {
  if (tokens.size() != tags.size())
    throw ValidationError("tokens/tags length mismatch");
  auto out = decode_entities(tags);
  for (auto& e : out) {
    e.left_boundary = tokens[e.start];
    e.right_boundary = tokens[e.end - 1];
  }
  return out;
}

TagSequence encode_entities(std::span<const Entity> entities, std::size_t n) {
  std::vector<const Entity*> sorted;
  sorted.reserve(entities.size());
  for (const auto& e : entities) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(),
            [](const Entity* a, const Entity* b) { return a->start < b->start; });

  TagSequence tags(n, "O");
  std::size_t prev_end = 0;
  bool first = true;
  for (const Entity* e : sorted) {
    if (e->start >= e->end || e->end > n)
      throw ValidationError("entity span [" + std::to_string(e->start) + ", " +
                            std::to_string(e->end) + ") out of range for n=" +
                            std::to_string(n));
    if (!first && e->start < prev_end)
      throw ValidationError("overlapping entity spans");
    first = false;
    prev_end = e->end;
    tags[e->start] = "B-" + e->type;
    for (std::size_t i = e->start + 1; i < e->end; ++i) tags[i] = "I-" + e->type;
  }
  return tags;
}

namespace {

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) fields.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

void finish_sentence(Dataset& ds, std::vector<std::string>& tokens,
                     TagSequence& tags, bool labeled) {
  if (tokens.empty()) return;
  Sentence s;
  s.id = "s" + std::to_string(ds.sentences.size() + 1);
  s.tokens = std::move(tokens);
  ds.sentences.push_back(std::move(s));
  if (labeled) ds.gold->push_back(repair_bio(std::move(tags)));
  tokens.clear();
  tags.clear();
}

}  // namespace

Dataset parse_conll(std::string_view text) {
  Dataset ds;
  std::vector<std::string> tokens;
  TagSequence tags;
  std::optional<bool> labeled;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(
        pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    auto fields = split_fields(line);
    if (fields.empty()) {
      if (labeled.has_value())
        finish_sentence(ds, tokens, tags, *labeled);
    } else {
      if (fields.size() > 2)
        throw ParseError("expected 1 or 2 columns, found " +
                             std::to_string(fields.size()),
                         line_no);
      bool has_tag = fields.size() == 2;
      if (!labeled.has_value()) {
        labeled = has_tag;
        if (has_tag) ds.gold.emplace();
      } else if (*labeled != has_tag) {
        throw ParseError(has_tag ? "unexpected tag column in unlabeled data"
                                 : "missing tag column in labeled data",
                         line_no);
      }
      tokens.push_back(std::move(fields[0]));
      if (has_tag) {
        char mark;
        std::string_view type;
        if (!tag_parts(fields[1], mark, type))
          throw ParseError("unrecognized tag '" + fields[1] + "'", line_no);
        tags.push_back(std::move(fields[1]));
      }
    }

    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  if (labeled.has_value()) finish_sentence(ds, tokens, tags, *labeled);

  std::set<std::string> types;
  if (ds.gold) {
    for (const auto& seq : *ds.gold)
      for (const auto& e : decode_entities(seq)) types.insert(e.type);
  }
  ds.entity_types.assign(types.begin(), types.end());
  return ds;
}

std::string write_conll(const Dataset& dataset) {
  if (dataset.gold && dataset.gold->size() != dataset.sentences.size())
    throw ValidationError("gold tags not aligned with sentences");
  std::string out;
  for (std::size_t s = 0; s < dataset.sentences.size(); ++s) {
    const auto& sent = dataset.sentences[s];
    if (dataset.gold && (*dataset.gold)[s].size() != sent.tokens.size())
      throw ValidationError("gold tag length mismatch in sentence " + sent.id);
    for (std::size_t i = 0; i < sent.tokens.size(); ++i) {
      const std::string& tok = sent.tokens[i];
      if (tok.empty() || tok.find_first_of(" \t\n\r") != std::string::npos)
        throw ValidationError("token not serializable: '" + tok + "'");
      out += tok;
      if (dataset.gold) {
        out += '\t';
        out += (*dataset.gold)[s][i];
      }
      out += '\n';
    }
    out += '\n';
  }
  return out;
}

Dataset load_conll_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_conll(buf.str());
}

void save_conll_file(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write file: " + path);
  out << write_conll(dataset);
}

}  // namespace viba
