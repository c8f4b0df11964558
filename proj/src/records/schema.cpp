#include "anchor/records/schema.hpp"

#include <set>

#include "anchor/error.hpp"

namespace anchor::records {

std::string_view to_string(ElementType t) noexcept {
  switch (t) {
    case ElementType::I64: return "i64";
    case ElementType::F64: return "f64";
    case ElementType::Bytes: return "bytes";
  }
  return "?";
}

std::string_view to_string(WriterRole r) noexcept {
  switch (r) {
    case WriterRole::Ingestion: return "ingestion";
    case WriterRole::Feedback: return "feedback";
  }
  return "?";
}

namespace {

bool name_char(char c) noexcept {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
         c == '-' || c == '.';
}

}  // namespace

void validate_schema(const RecordSchema& schema) {
  if (schema.groups.empty()) throw Error(Errc::SchemaInvalid, "schema has no field groups");
  if (schema.groups.size() > kMaxGroups) throw Error(Errc::SchemaInvalid, "too many field groups");
  std::set<std::string> seen;
  for (const auto& g : schema.groups) {
    if (g.name.empty() || g.name.size() > kMaxGroupName) throw Error(Errc::SchemaInvalid, "bad group name '" + g.name + "'");
    for (char c : g.name) {
      if (!name_char(c)) throw Error(Errc::SchemaInvalid, "bad group name '" + g.name + "'");
    }
    if (!seen.insert(g.name).second) throw Error(Errc::SchemaInvalid, "duplicate group name '" + g.name + "'");
    if (g.arity < 1) throw Error(Errc::SchemaInvalid, "group '" + g.name + "' has arity 0");
    if (g.type != ElementType::I64 && g.type != ElementType::F64 && g.type != ElementType::Bytes) {
      throw Error(Errc::SchemaInvalid, "group '" + g.name + "' has unknown element type");
    }
    if (g.writer != WriterRole::Ingestion && g.writer != WriterRole::Feedback) {
      throw Error(Errc::SchemaInvalid, "group '" + g.name + "' has unknown writer role");
    }
    if (g.type == ElementType::Bytes && g.max_bytes == 0) {
      throw Error(Errc::SchemaInvalid, "bytes group '" + g.name + "' needs max_bytes");
    }
    if (g.type != ElementType::Bytes && g.max_bytes != 0) {
      throw Error(Errc::SchemaInvalid, "numeric group '" + g.name + "' must not set max_bytes");
    }
  }
}

std::uint32_t element_stride(const FieldGroup& g) noexcept {
  if (g.type != ElementType::Bytes) return 8;
  return (4 + g.max_bytes + 7) / 8 * 8;
}

std::vector<GroupLayout> compute_layout(const std::vector<FieldGroup>& groups, std::uint64_t body_start) {
  std::vector<GroupLayout> out;
  out.reserve(groups.size());
  std::uint64_t at = (body_start + 7) / 8 * 8;
  for (const auto& g : groups) {
    GroupLayout l{g, at, static_cast<std::uint64_t>(g.arity) * element_stride(g)};
    at += l.size;
    out.push_back(std::move(l));
  }
  return out;
}

GroupValues zero_values(const FieldGroup& g) {
  switch (g.type) {
    case ElementType::I64: return std::vector<std::int64_t>(g.arity, 0);
    case ElementType::F64: return std::vector<double>(g.arity, 0.0);
    case ElementType::Bytes: return std::vector<std::string>(g.arity);
  }
  return std::vector<double>{};
}

}  // namespace anchor::records
