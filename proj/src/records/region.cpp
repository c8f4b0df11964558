#include "anchor/records/region.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <atomic>
#include <bit>
#include <cerrno>
#include <cstring>
#include <set>
#include <thread>

#include "anchor/clock.hpp"
#include "anchor/error.hpp"

static_assert(std::endian::native == std::endian::little, "region format assumes a little-endian host");

namespace anchor::records {

namespace {

constexpr char kRegionMagic[4] = {'A', 'N', 'C', 'R'};
constexpr std::uint64_t kOffSchemaVersion = 8;
constexpr std::uint64_t kOffGroupCount = 12;
constexpr std::uint64_t kOffRegionLength = 16;
constexpr std::uint64_t kOffVersionCounter = 24;
constexpr std::uint64_t kOffHeaderSize = 32;
constexpr std::uint64_t kDescriptorBase = 64;
constexpr std::uint64_t kDescriptorSize = 64;

std::string errno_text(const std::string& what) { return what + ": " + std::strerror(errno); }

template <typename T>
T load_plain(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <typename T>
void store_plain(std::uint8_t* p, T v) {
  std::memcpy(p, &v, sizeof v);
}

std::atomic_ref<std::uint64_t> word(std::uint8_t* base, std::uint64_t offset) {
  return std::atomic_ref<std::uint64_t>(*reinterpret_cast<std::uint64_t*>(base + offset));
}

const char* values_type_name(const GroupValues& v) {
  switch (v.index()) {
    case 0: return "i64";
    case 1: return "f64";
    default: return "bytes";
  }
}

}  // namespace

const GroupSnapshot& Snapshot::group(std::string_view name) const {
  for (const auto& g : groups) {
    if (g.name == name) return g;
  }
  throw Error(Errc::UnknownGroup, std::string(name));
}

const std::vector<double>& Snapshot::f64(std::string_view name) const {
  const auto& g = group(name);
  if (const auto* v = std::get_if<std::vector<double>>(&g.values)) return *v;
  throw Error(Errc::ArityMismatch, "group '" + std::string(name) + "' is not f64");
}

const std::vector<std::int64_t>& Snapshot::i64(std::string_view name) const {
  const auto& g = group(name);
  if (const auto* v = std::get_if<std::vector<std::int64_t>>(&g.values)) return *v;
  throw Error(Errc::ArityMismatch, "group '" + std::string(name) + "' is not i64");
}

// ---- WriteTxn -------------------------------------------------------------

WriteTxn::WriteTxn(RegionHandle& h, std::size_t group_index, std::uint64_t start)
    : handle_(&h), group_index_(group_index), start_(start) {}

WriteTxn::WriteTxn(WriteTxn&& o) noexcept
    : handle_(o.handle_),
      group_index_(o.group_index_),
      start_(o.start_),
      open_(std::exchange(o.open_, false)),
      stored_(std::move(o.stored_)) {}

WriteTxn::~WriteTxn() {
  if (open_) commit();
}

void WriteTxn::store(const GroupValues& values) {
  const auto& l = handle_->layout_[group_index_];
  handle_->check_values(l, values);
  handle_->store_values(l, values);
  stored_ = values;
}

std::uint64_t WriteTxn::commit() {
  if (!open_) return start_;
  open_ = false;
  std::atomic_ref<std::uint64_t> counter(*handle_->group_counter(group_index_));
  const std::uint64_t done = (start_ | 1) + 1;
  counter.store(done, std::memory_order_release);
  std::atomic_ref<std::uint64_t>(*handle_->region_counter()).fetch_add(2, std::memory_order_acq_rel);
  if (handle_->log_ && stored_) {
    const auto& l = handle_->layout_[group_index_];
    handle_->log_->append(LogKind::RecordWrite, encode_record_write({l.group.name, *stored_, done}), monotonic_ns());
  }
  return done;
}

// ---- RegionHandle ----------------------------------------------------------

RegionHandle::RegionHandle(int fd, std::string path, AccessRole role, RegionOptions options)
    : fd_(fd), path_(std::move(path)), role_(role), options_(options) {}

RegionHandle::RegionHandle(RegionHandle&& o) noexcept
    : fd_(std::exchange(o.fd_, -1)),
      path_(std::move(o.path_)),
      role_(o.role_),
      options_(o.options_),
      base_(std::exchange(o.base_, nullptr)),
      mapped_(std::exchange(o.mapped_, 0)),
      length_(o.length_),
      schema_(std::move(o.schema_)),
      layout_(std::move(o.layout_)),
      log_(o.log_) {}

RegionHandle& RegionHandle::operator=(RegionHandle&& o) noexcept {
  if (this != &o) {
    unmap();
    if (fd_ >= 0) ::close(fd_);
    fd_ = std::exchange(o.fd_, -1);
    path_ = std::move(o.path_);
    role_ = o.role_;
    options_ = o.options_;
    base_ = std::exchange(o.base_, nullptr);
    mapped_ = std::exchange(o.mapped_, 0);
    length_ = o.length_;
    schema_ = std::move(o.schema_);
    layout_ = std::move(o.layout_);
    log_ = o.log_;
  }
  return *this;
}

RegionHandle::~RegionHandle() {
  unmap();
  if (fd_ >= 0) ::close(fd_);
}

void RegionHandle::map(std::uint64_t length) {
  unmap();
  void* p = ::mmap(nullptr, length, PROT_READ | PROT_WRITE, MAP_SHARED, fd_, 0);
  if (p == MAP_FAILED) throw Error(Errc::IoFailure, errno_text("mmap " + path_));
  base_ = static_cast<std::uint8_t*>(p);
  mapped_ = length;
}

void RegionHandle::unmap() noexcept {
  if (base_) ::munmap(base_, mapped_);
  base_ = nullptr;
  mapped_ = 0;
}

RegionHandle RegionHandle::create(const std::string& path, const RecordSchema& schema, AccessRole role,
                                  RegionOptions options) {
  validate_schema(schema);
  const auto layout = compute_layout(schema.groups, kRegionHeaderSize);
  const std::uint64_t length = layout.back().offset + layout.back().size;

  // Build under a temporary name so a concurrent opener never sees a half-written header.
  const std::string tmp = path + ".tmp." + std::to_string(::getpid());
  const int fd = ::open(tmp.c_str(), O_RDWR | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(Errc::IoFailure, errno_text("create " + tmp));
  RegionHandle h(fd, path, role, options);
  try {
    if (::ftruncate(fd, static_cast<off_t>(length)) != 0) throw Error(Errc::IoFailure, errno_text("truncate " + tmp));
    h.map(length);
    std::memcpy(h.base_, kRegionMagic, 4);
    store_plain<std::uint32_t>(h.base_ + 4, kRegionFormatVersion);
    store_plain<std::uint32_t>(h.base_ + kOffSchemaVersion, schema.schema_version);
    store_plain<std::uint32_t>(h.base_ + kOffGroupCount, static_cast<std::uint32_t>(layout.size()));
    store_plain<std::uint64_t>(h.base_ + kOffRegionLength, length);
    store_plain<std::uint64_t>(h.base_ + kOffVersionCounter, 0);
    store_plain<std::uint64_t>(h.base_ + kOffHeaderSize, kRegionHeaderSize);
    for (std::size_t i = 0; i < layout.size(); ++i) h.write_descriptor(i, layout[i]);
    if (::fsync(fd) != 0) throw Error(Errc::IoFailure, errno_text("fsync " + tmp));
    if (::rename(tmp.c_str(), path.c_str()) != 0) throw Error(Errc::IoFailure, errno_text("rename " + tmp));
  } catch (...) {
    ::unlink(tmp.c_str());
    throw;
  }
  h.load_header();
  return h;
}

RegionHandle RegionHandle::open(const std::string& path, AccessRole role, RegionOptions options) {
  const int fd = ::open(path.c_str(), O_RDWR | O_CLOEXEC);
  if (fd < 0) throw Error(Errc::IoFailure, errno_text("open " + path));
  RegionHandle h(fd, path, role, options);
  struct stat st {};
  if (::fstat(fd, &st) != 0) throw Error(Errc::IoFailure, errno_text("stat " + path));
  if (static_cast<std::uint64_t>(st.st_size) < kRegionHeaderSize) {
    throw Error(Errc::BadMagic, path + " is too small to be a region");
  }
  h.map(static_cast<std::uint64_t>(st.st_size));
  if (std::memcmp(h.base_, kRegionMagic, 4) != 0) throw Error(Errc::BadMagic, path + " is not a region file");
  const auto format = load_plain<std::uint32_t>(h.base_ + 4);
  if (format != kRegionFormatVersion) {
    throw Error(Errc::VersionUnsupported, path + " region format " + std::to_string(format));
  }
  if (load_plain<std::uint64_t>(h.base_ + kOffHeaderSize) != kRegionHeaderSize) {
    throw Error(Errc::VersionUnsupported, path + " unexpected header size");
  }
  h.load_header();
  return h;
}

void RegionHandle::write_descriptor(std::size_t index, const GroupLayout& l) {
  std::uint8_t* d = base_ + kDescriptorBase + index * kDescriptorSize;
  std::memset(d, 0, 48);
  std::memcpy(d, l.group.name.data(), l.group.name.size());
  d[32] = static_cast<std::uint8_t>(l.group.type);
  d[33] = static_cast<std::uint8_t>(l.group.writer);
  store_plain<std::uint32_t>(d + 36, l.group.arity);
  store_plain<std::uint32_t>(d + 40, element_stride(l.group));
  store_plain<std::uint32_t>(d + 44, l.group.max_bytes);
  store_plain<std::uint64_t>(d + 48, l.offset);
  store_plain<std::uint64_t>(d + 56, 0);
}

void RegionHandle::load_header() {
  const auto schema_version =
      std::atomic_ref<std::uint32_t>(*reinterpret_cast<std::uint32_t*>(base_ + kOffSchemaVersion))
          .load(std::memory_order_acquire);
  const auto count = load_plain<std::uint32_t>(base_ + kOffGroupCount);
  const auto length = load_plain<std::uint64_t>(base_ + kOffRegionLength);
  if (count == 0 || count > kMaxGroups) throw Error(Errc::SchemaInvalid, path_ + ": bad group count");
  if (length > mapped_) {
    map(length);
    return load_header();
  }
  RecordSchema schema;
  schema.schema_version = schema_version;
  std::vector<GroupLayout> layout;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint8_t* d = base_ + kDescriptorBase + i * kDescriptorSize;
    FieldGroup g;
    g.name.assign(reinterpret_cast<const char*>(d), strnlen(reinterpret_cast<const char*>(d), 32));
    g.type = static_cast<ElementType>(d[32]);
    g.writer = static_cast<WriterRole>(d[33]);
    g.arity = load_plain<std::uint32_t>(d + 36);
    g.max_bytes = load_plain<std::uint32_t>(d + 44);
    const auto offset = load_plain<std::uint64_t>(d + 48);
    GroupLayout l{g, offset, static_cast<std::uint64_t>(g.arity) * element_stride(g)};
    if (offset % 8 != 0 || offset + l.size > length) throw Error(Errc::SchemaInvalid, path_ + ": bad group offset");
    schema.groups.push_back(g);
    layout.push_back(std::move(l));
  }
  validate_schema(schema);
  schema_ = std::move(schema);
  layout_ = std::move(layout);
  length_ = length;
}

void RegionHandle::refresh() {
  struct stat st {};
  if (::fstat(fd_, &st) != 0) throw Error(Errc::IoFailure, errno_text("stat " + path_));
  if (static_cast<std::uint64_t>(st.st_size) > mapped_) map(static_cast<std::uint64_t>(st.st_size));
  load_header();
}

std::size_t RegionHandle::index_of(std::string_view group) const {
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    if (layout_[i].group.name == group) return i;
  }
  throw Error(Errc::UnknownGroup, std::string(group));
}

const GroupLayout& RegionHandle::layout_of(std::string_view group) const { return layout_[index_of(group)]; }

std::uint64_t* RegionHandle::group_counter(std::size_t index) const noexcept {
  return reinterpret_cast<std::uint64_t*>(base_ + kDescriptorBase + index * kDescriptorSize + 56);
}

std::uint64_t* RegionHandle::region_counter() const noexcept {
  return reinterpret_cast<std::uint64_t*>(base_ + kOffVersionCounter);
}

std::uint64_t RegionHandle::version_counter() const noexcept {
  return std::atomic_ref<std::uint64_t>(*region_counter()).load(std::memory_order_acquire);
}

void RegionHandle::check_values(const GroupLayout& l, const GroupValues& values) const {
  const auto& g = l.group;
  const bool type_ok = (g.type == ElementType::I64 && values.index() == 0) ||
                       (g.type == ElementType::F64 && values.index() == 1) ||
                       (g.type == ElementType::Bytes && values.index() == 2);
  if (!type_ok) {
    throw Error(Errc::ArityMismatch, "group '" + g.name + "' holds " + std::string(to_string(g.type)) + ", got " +
                                         values_type_name(values));
  }
  const std::size_t n = std::visit([](const auto& v) { return v.size(); }, values);
  if (n != g.arity) {
    throw Error(Errc::ArityMismatch,
                "group '" + g.name + "' arity " + std::to_string(g.arity) + ", got " + std::to_string(n));
  }
  if (const auto* strs = std::get_if<std::vector<std::string>>(&values)) {
    for (const auto& s : *strs) {
      if (s.size() > g.max_bytes) throw Error(Errc::ArityMismatch, "element exceeds max_bytes of '" + g.name + "'");
    }
  }
}

void RegionHandle::store_values(const GroupLayout& l, const GroupValues& values) {
  std::visit(
      [&](const auto& vec) {
        using V = std::decay_t<decltype(vec)>;
        if constexpr (std::is_same_v<V, std::vector<std::int64_t>>) {
          for (std::size_t i = 0; i < vec.size(); ++i) {
            word(base_, l.offset + 8 * i).store(static_cast<std::uint64_t>(vec[i]), std::memory_order_relaxed);
          }
        } else if constexpr (std::is_same_v<V, std::vector<double>>) {
          for (std::size_t i = 0; i < vec.size(); ++i) {
            word(base_, l.offset + 8 * i).store(std::bit_cast<std::uint64_t>(vec[i]), std::memory_order_relaxed);
          }
        } else {
          const std::uint32_t stride = element_stride(l.group);
          std::vector<std::uint64_t> buf(stride / 8);
          for (std::size_t i = 0; i < vec.size(); ++i) {
            std::fill(buf.begin(), buf.end(), 0);
            auto* bytes = reinterpret_cast<std::uint8_t*>(buf.data());
            const auto len = static_cast<std::uint32_t>(vec[i].size());
            std::memcpy(bytes, &len, 4);
            std::memcpy(bytes + 4, vec[i].data(), len);
            for (std::size_t w = 0; w < buf.size(); ++w) {
              word(base_, l.offset + i * stride + 8 * w).store(buf[w], std::memory_order_relaxed);
            }
          }
        }
      },
      values);
}

WriteTxn RegionHandle::begin_write(std::string_view group) {
  const std::size_t index = index_of(group);
  const auto& g = layout_[index].group;
  const bool allowed = (role_ == AccessRole::Ingestion && g.writer == WriterRole::Ingestion) ||
                       (role_ == AccessRole::Feedback && g.writer == WriterRole::Feedback);
  if (!allowed) {
    throw Error(Errc::RoleViolation, "handle may not write group '" + g.name + "' owned by " +
                                         std::string(to_string(g.writer)));
  }
  std::atomic_ref<std::uint64_t> counter(*group_counter(index));
  const std::uint64_t start = counter.load(std::memory_order_relaxed);
  // An odd counter here means a previous writer died mid-write; this write supersedes it.
  if (start % 2 == 0) counter.store(start + 1, std::memory_order_relaxed);
  std::atomic_thread_fence(std::memory_order_release);
  return WriteTxn(*this, index, start);
}

std::uint64_t RegionHandle::write_group(std::string_view group, const GroupValues& values) {
  check_values(layout_of(group), values);
  auto txn = begin_write(group);
  txn.store(values);
  return txn.commit();
}

Snapshot RegionHandle::read_snapshot(const std::vector<std::string>& groups) {
  const auto current_version = std::atomic_ref<std::uint32_t>(*reinterpret_cast<std::uint32_t*>(base_ + kOffSchemaVersion))
                                   .load(std::memory_order_acquire);
  if (current_version != schema_.schema_version) refresh();

  std::vector<std::size_t> indices;
  if (groups.empty()) {
    for (std::size_t i = 0; i < layout_.size(); ++i) indices.push_back(i);
  } else {
    for (const auto& name : groups) indices.push_back(index_of(name));
  }

  Snapshot snap;
  snap.schema_version = schema_.schema_version;
  snap.version_counter = version_counter();
  for (const std::size_t index : indices) {
    const auto& l = layout_[index];
    std::atomic_ref<std::uint64_t> counter(*group_counter(index));
    std::vector<std::uint64_t> raw(l.size / 8);
    bool stable = false;
    std::uint64_t observed = 0;
    for (std::size_t attempt = 0; attempt < options_.max_retries; ++attempt) {
      const std::uint64_t before = counter.load(std::memory_order_acquire);
      if (before % 2 == 0) {
        for (std::size_t w = 0; w < raw.size(); ++w) raw[w] = word(base_, l.offset + 8 * w).load(std::memory_order_relaxed);
        std::atomic_thread_fence(std::memory_order_acquire);
        const std::uint64_t after = counter.load(std::memory_order_relaxed);
        if (before == after) {
          observed = before;
          stable = true;
          break;
        }
      }
      std::this_thread::yield();
    }
    if (!stable) {
      throw Error(Errc::ContendedTimeout, "group '" + l.group.name + "' not stable after " +
                                              std::to_string(options_.max_retries) + " attempts");
    }

    GroupSnapshot gs;
    gs.name = l.group.name;
    gs.version_counter = observed;
    switch (l.group.type) {
      case ElementType::I64: {
        std::vector<std::int64_t> v(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) v[i] = static_cast<std::int64_t>(raw[i]);
        gs.values = std::move(v);
        break;
      }
      case ElementType::F64: {
        std::vector<double> v(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) v[i] = std::bit_cast<double>(raw[i]);
        gs.values = std::move(v);
        break;
      }
      case ElementType::Bytes: {
        const std::uint32_t stride = element_stride(l.group);
        const auto* bytes = reinterpret_cast<const std::uint8_t*>(raw.data());
        std::vector<std::string> v(l.group.arity);
        for (std::size_t i = 0; i < v.size(); ++i) {
          std::uint32_t len = 0;
          std::memcpy(&len, bytes + i * stride, 4);
          len = std::min(len, l.group.max_bytes);
          v[i].assign(reinterpret_cast<const char*>(bytes + i * stride + 4), len);
        }
        gs.values = std::move(v);
        break;
      }
    }
    snap.groups.push_back(std::move(gs));
  }
  return snap;
}

std::uint32_t RegionHandle::extend_schema(const std::vector<FieldGroup>& new_groups) {
  if (role_ != AccessRole::Maintenance) throw Error(Errc::RoleViolation, "extend_schema needs a maintenance handle");
  if (new_groups.empty()) return schema_.schema_version;
  if (::flock(fd_, LOCK_EX) != 0) throw Error(Errc::IoFailure, errno_text("flock " + path_));
  struct Unlock {
    int fd;
    ~Unlock() { ::flock(fd, LOCK_UN); }
  } unlock{fd_};

  refresh();
  std::set<std::string> names;
  for (const auto& g : schema_.groups) names.insert(g.name);
  for (const auto& g : new_groups) {
    if (!names.insert(g.name).second) throw Error(Errc::NameCollision, "group '" + g.name + "' already exists");
  }
  RecordSchema extended = schema_;
  extended.groups.insert(extended.groups.end(), new_groups.begin(), new_groups.end());
  validate_schema(extended);

  // Append after the current body; existing offsets stay untouched.
  auto appended = compute_layout(new_groups, length_);
  const std::uint64_t new_length = appended.back().offset + appended.back().size;
  if (::ftruncate(fd_, static_cast<off_t>(new_length)) != 0) throw Error(Errc::IoFailure, errno_text("grow " + path_));
  map(new_length);
  const std::size_t first = layout_.size();
  for (std::size_t i = 0; i < appended.size(); ++i) write_descriptor(first + i, appended[i]);
  store_plain<std::uint32_t>(base_ + kOffGroupCount, static_cast<std::uint32_t>(first + appended.size()));
  store_plain<std::uint64_t>(base_ + kOffRegionLength, new_length);
  const std::uint32_t next_version = schema_.schema_version + 1;
  std::atomic_ref<std::uint32_t>(*reinterpret_cast<std::uint32_t*>(base_ + kOffSchemaVersion))
      .store(next_version, std::memory_order_release);
  if (::msync(base_, kRegionHeaderSize, MS_SYNC) != 0) throw Error(Errc::IoFailure, errno_text("msync " + path_));
  load_header();
  return next_version;
}

}  // namespace anchor::records
