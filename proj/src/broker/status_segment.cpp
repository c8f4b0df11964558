#include "anchor/broker/status_segment.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <utility>

#include "anchor/error.hpp"

namespace anchor::broker {

namespace {

constexpr std::uint32_t kMagic = 0x4243'4E41;  // "ANCB"
constexpr std::size_t kSize = 4096;

struct Block {
  std::uint32_t magic;
  std::uint32_t version;
  std::uint64_t words[8];  // StatusSnapshot fields in declaration order
};
static_assert(sizeof(StatusSnapshot) == 8 * sizeof(std::uint64_t));

}  // namespace

StatusSegment StatusSegment::create(const std::string& path) {
  const int fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(Errc::IoFailure, "open " + path + ": " + std::strerror(errno));
  if (::ftruncate(fd, kSize) != 0) {
    ::close(fd);
    throw Error(Errc::IoFailure, "ftruncate " + path);
  }
  void* base = ::mmap(nullptr, kSize, PROT_READ | PROT_WRITE, MAP_SHARED, fd, 0);
  ::close(fd);
  if (base == MAP_FAILED) throw Error(Errc::IoFailure, "mmap " + path);
  auto* b = static_cast<Block*>(base);
  b->version = 1;
  std::atomic_ref<std::uint32_t>(b->magic).store(kMagic, std::memory_order_release);
  return StatusSegment(path, base);
}

std::optional<StatusSnapshot> StatusSegment::read(const std::string& path) {
  const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd < 0) return std::nullopt;
  Block b{};
  const ssize_t n = ::pread(fd, &b, sizeof b, 0);
  ::close(fd);
  if (n != static_cast<ssize_t>(sizeof b) || b.magic != kMagic) return std::nullopt;
  StatusSnapshot s;
  std::memcpy(&s, b.words, sizeof s);
  return s;
}

StatusSegment::StatusSegment(StatusSegment&& o) noexcept
    : path_(std::move(o.path_)), base_(std::exchange(o.base_, nullptr)) {}

StatusSegment& StatusSegment::operator=(StatusSegment&& o) noexcept {
  if (this != &o) {
    unmap();
    path_ = std::move(o.path_);
    base_ = std::exchange(o.base_, nullptr);
  }
  return *this;
}

StatusSegment::~StatusSegment() { unmap(); }

void StatusSegment::unmap() noexcept {
  if (base_) ::munmap(base_, kSize);
  base_ = nullptr;
}

void StatusSegment::publish(const StatusSnapshot& s) noexcept {
  if (!base_) return;
  auto* b = static_cast<Block*>(base_);
  std::uint64_t src[8];
  std::memcpy(src, &s, sizeof src);
  for (std::size_t i = 0; i < 8; ++i) {
    std::atomic_ref<std::uint64_t>(b->words[i]).store(src[i], std::memory_order_relaxed);
  }
}

void StatusSegment::remove() noexcept {
  unmap();
  if (!path_.empty()) ::unlink(path_.c_str());
}

}  // namespace anchor::broker
