#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace anchor::records {

enum class ElementType : std::uint8_t { I64 = 1, F64 = 2, Bytes = 3 };

/// Which handler owns the write path of a field group.
enum class WriterRole : std::uint8_t { Ingestion = 1, Feedback = 2 };

std::string_view to_string(ElementType t) noexcept;
std::string_view to_string(WriterRole r) noexcept;

struct FieldGroup {
  std::string name;
  ElementType type = ElementType::F64;
  std::uint32_t arity = 1;
  WriterRole writer = WriterRole::Ingestion;
  std::uint32_t max_bytes = 0;  // Bytes elements only

  friend bool operator==(const FieldGroup&, const FieldGroup&) = default;
};

struct RecordSchema {
  std::uint32_t schema_version = 1;
  std::vector<FieldGroup> groups;
};

constexpr std::size_t kMaxGroupName = 31;
constexpr std::size_t kMaxGroups = 63;

/// Throws Error(SchemaInvalid).
void validate_schema(const RecordSchema& schema);

/// Bytes per array element: 8 for numbers, 4-byte length + payload padded to 8 for byte strings.
std::uint32_t element_stride(const FieldGroup& g) noexcept;

struct GroupLayout {
  FieldGroup group;
  std::uint64_t offset = 0;  // from start of the region file
  std::uint64_t size = 0;    // arity * stride, multiple of 8
};

/// Packs groups in order from body_start; every offset is 8-byte aligned.
std::vector<GroupLayout> compute_layout(const std::vector<FieldGroup>& groups, std::uint64_t body_start);

using GroupValues = std::variant<std::vector<std::int64_t>, std::vector<double>, std::vector<std::string>>;

/// Zero value of the right element type and arity.
GroupValues zero_values(const FieldGroup& g);

}  // namespace anchor::records
