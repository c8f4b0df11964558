#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "anchor/records/replay_log.hpp"
#include "anchor/records/schema.hpp"

namespace anchor::records {

/// What a handle may do. Writer roles may only mutate groups they own;
/// Maintenance may extend the schema; everyone may read.
enum class AccessRole : std::uint8_t { Reader, Ingestion, Feedback, Maintenance };

//
// Region file layout (little-endian)
//
//   0    magic "ANCR"
//   4    format_version u32
//   8    schema_version u32
//   12   group_count u32
//   16   region_length u64
//   24   version_counter u64   region-wide commit counter (+2 per committed write)
//   32   header_size u64       always 4096
//   40   reserved
//   64   63 group descriptors of 64 bytes each:
//          0  name[32] NUL padded
//          32 element_type u8, 33 writer_role u8, 34 reserved u16
//          36 arity u32, 40 stride u32, 44 max_bytes u32
//          48 offset u64
//          56 version_counter u64   per-group sequence lock (odd = write in progress)
//   4096 packed group arrays
//
constexpr std::uint32_t kRegionFormatVersion = 1;
constexpr std::uint64_t kRegionHeaderSize = 4096;

struct GroupSnapshot {
  std::string name;
  std::uint64_t version_counter = 0;
  GroupValues values;
};

/// Values copied under a stable even counter for every group.
struct Snapshot {
  std::uint32_t schema_version = 0;
  std::uint64_t version_counter = 0;  // region-wide counter observed at start
  std::vector<GroupSnapshot> groups;

  const GroupSnapshot& group(std::string_view name) const;
  const std::vector<double>& f64(std::string_view name) const;
  const std::vector<std::int64_t>& i64(std::string_view name) const;
};

struct RegionOptions {
  std::size_t max_retries = 64;
};

class RegionHandle;

/// An open write on one group. The counter stays odd until commit() or
/// destruction, so readers observing the group retry meanwhile.
class WriteTxn {
 public:
  WriteTxn(WriteTxn&& o) noexcept;
  WriteTxn& operator=(WriteTxn&&) = delete;
  ~WriteTxn();

  void store(const GroupValues& values);
  /// Returns the group's new (even) counter.
  std::uint64_t commit();

 private:
  friend class RegionHandle;
  WriteTxn(RegionHandle& h, std::size_t group_index, std::uint64_t start);

  RegionHandle* handle_;
  std::size_t group_index_;
  std::uint64_t start_;
  bool open_ = true;
  std::optional<GroupValues> stored_;
};

/// A process-local mapping of a region file. Move-only; one handle must not be
/// used from two threads at once, but any number of handles may share a file.
class RegionHandle {
 public:
  static RegionHandle create(const std::string& path, const RecordSchema& schema,
                             AccessRole role = AccessRole::Maintenance, RegionOptions options = {});
  static RegionHandle open(const std::string& path, AccessRole role = AccessRole::Reader,
                           RegionOptions options = {});

  RegionHandle(RegionHandle&& o) noexcept;
  RegionHandle& operator=(RegionHandle&& o) noexcept;
  RegionHandle(const RegionHandle&) = delete;
  RegionHandle& operator=(const RegionHandle&) = delete;
  ~RegionHandle();

  /// Throws Error(RoleViolation | ArityMismatch | UnknownGroup).
  std::uint64_t write_group(std::string_view group, const GroupValues& values);
  WriteTxn begin_write(std::string_view group);

  /// Empty list reads every group. Throws Error(ContendedTimeout | UnknownGroup).
  Snapshot read_snapshot(const std::vector<std::string>& groups = {});

  /// Maintenance only; writers of this region must be stopped. Returns the new schema_version.
  std::uint32_t extend_schema(const std::vector<FieldGroup>& new_groups);

  /// Re-reads the header and remaps when the schema grew.
  void refresh();

  const RecordSchema& schema() const noexcept { return schema_; }
  const std::vector<GroupLayout>& layout() const noexcept { return layout_; }
  const GroupLayout& layout_of(std::string_view group) const;
  std::uint64_t region_length() const noexcept { return length_; }
  std::uint64_t version_counter() const noexcept;
  AccessRole role() const noexcept { return role_; }
  const std::string& path() const noexcept { return path_; }

  /// Mirror every committed write into a replay log (not owned).
  void attach_log(ReplayLogWriter* log) noexcept { log_ = log; }

 private:
  friend class WriteTxn;
  RegionHandle(int fd, std::string path, AccessRole role, RegionOptions options);

  void map(std::uint64_t length);
  void unmap() noexcept;
  void load_header();
  std::size_t index_of(std::string_view group) const;
  std::uint64_t* group_counter(std::size_t index) const noexcept;
  std::uint64_t* region_counter() const noexcept;
  void store_values(const GroupLayout& l, const GroupValues& values);
  GroupValues load_values(const GroupLayout& l) const;
  void check_values(const GroupLayout& l, const GroupValues& values) const;
  void write_descriptor(std::size_t index, const GroupLayout& l);

  int fd_ = -1;
  std::string path_;
  AccessRole role_ = AccessRole::Reader;
  RegionOptions options_;
  std::uint8_t* base_ = nullptr;
  std::uint64_t mapped_ = 0;
  std::uint64_t length_ = 0;
  RecordSchema schema_;
  std::vector<GroupLayout> layout_;
  ReplayLogWriter* log_ = nullptr;
};

}  // namespace anchor::records
