#pragma once

// Application protocol inside the secure channel. Every plaintext starts
// with a sub-type byte:
//
//   0x01 manifest  canonical JSON {"chunk":..,"name":..,"sha256":..,"size":..}
//   0x02 accept
//   0x03 reject
//   0x04 chunk     offset (8, big-endian) | data
//   0x05 end
//
// The receiver closes the stream gracefully only after the file is verified
// and in place; the sender reads that close as the completion signal.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "pcp/async.hpp"
#include "pcp/auth.hpp"
#include "pcp/crypto.hpp"

namespace pcp {

enum class AppMessage : std::uint8_t {
  manifest = 0x01,
  accept = 0x02,
  reject = 0x03,
  chunk = 0x04,
  end = 0x05,
};

inline constexpr std::uint32_t kDefaultChunkSize = 64 * 1024;
inline constexpr std::uint32_t kMaxChunkSize = 8 * 1024 * 1024;
inline constexpr std::size_t kMaxFilenameBytes = 255;
inline constexpr Millis kDefaultDecisionTimeout = 60'000;
inline constexpr Millis kDefaultIdleTimeout = 30'000;

/// Base names only: no separators, not "." or "..", no NUL, 1..255 bytes.
bool is_valid_filename(std::string_view name);

class TransferManifest {
 public:
  /// Throws Error(invalid_argument) on a bad filename or chunk size.
  TransferManifest(std::string filename, std::uint64_t size, crypto::Digest content_digest,
                   std::uint32_t chunk_size = kDefaultChunkSize);

  const std::string& filename() const { return filename_; }
  std::uint64_t size() const { return size_; }
  const crypto::Digest& content_digest() const { return digest_; }
  std::uint32_t chunk_size() const { return chunk_size_; }
  std::uint64_t chunk_count() const { return (size_ + chunk_size_ - 1) / chunk_size_; }

  /// Keys sorted, no whitespace.
  std::string to_json() const;
  /// Throws Error(parse_error) on malformed input or a bad field.
  static TransferManifest from_json(std::string_view text);

  bool operator==(const TransferManifest&) const = default;

 private:
  std::string filename_;
  std::uint64_t size_;
  crypto::Digest digest_;
  std::uint32_t chunk_size_;
};

/// Hashes the file in one pass. Throws Error(io_error) naming the path.
TransferManifest make_manifest(const std::filesystem::path& file, std::uint32_t chunk_size = kDefaultChunkSize);

enum class TransferStatus { completed, rejected, aborted };

std::string_view to_string(TransferStatus status);

struct TransferOutcome {
  TransferStatus status = TransferStatus::aborted;
  /// Body bytes that reached the receiver (sender: bytes sent).
  std::uint64_t bytes_received = 0;
  bool digest_verified = false;
  /// Receiver only: where the file landed.
  std::filesystem::path saved_as;
  std::string detail;
};

/// (bytes done, total). Non-decreasing; the last call on success has done == total.
using ProgressFn = std::function<void(std::uint64_t, std::uint64_t)>;

enum class Decision { accept, reject };

/// Asks whoever is on the receiving end whether to take the file.
class DecisionSource {
 public:
  virtual ~DecisionSource() = default;
  /// nullopt means no answer before the deadline.
  virtual Task<std::optional<Decision>> decide(const TransferManifest& manifest, TimePoint deadline) = 0;
};

/// Fixed answer for tests and --yes; `silent` never answers.
class ScriptedDecision final : public DecisionSource {
 public:
  enum class Mode { accept, reject, silent };

  ScriptedDecision(Executor& ex, Mode mode, Millis think_time = 0) : ex_(ex), mode_(mode), think_(think_time) {}

  Task<std::optional<Decision>> decide(const TransferManifest& manifest, TimePoint deadline) override;

  int prompts() const { return prompts_; }

 private:
  Executor& ex_;
  Mode mode_;
  Millis think_;
  int prompts_ = 0;
};

/// Sends the manifest and waits for the receiver's verdict.
/// Throws Error(transfer_error) if the channel fails or the deadline passes.
Task<Decision> send_manifest(SecureChannel& chan, const TransferManifest& manifest, TimePoint deadline);

/// Throws Error(transfer_error) on a missing or malformed manifest.
Task<TransferManifest> receive_manifest(SecureChannel& chan, TimePoint deadline);

/// Prompts the decision source and sends accept or reject. No answer by the
/// deadline counts as reject.
Task<Decision> await_confirmation(SecureChannel& chan, const TransferManifest& manifest, DecisionSource& decisions,
                                  TimePoint deadline);

struct StreamOptions {
  Millis idle_timeout = kDefaultIdleTimeout;
  ProgressFn progress;
};

/// Sends the body of `file` as chunks, then the end frame, then waits for
/// the receiver's close. The file must still match the manifest's size.
Task<TransferOutcome> stream_file(SecureChannel& chan, std::filesystem::path file, TransferManifest manifest,
                                  StreamOptions options);

/// Receives the body into a temporary file in dest_dir, checks the digest
/// and renames it to a free name. Nothing is left behind on failure.
Task<TransferOutcome> receive_file(SecureChannel& chan, TransferManifest manifest, std::filesystem::path dest_dir,
                                   StreamOptions options);

/// dir/name, or "stem (n).ext" for the first n that is not taken.
std::filesystem::path unique_destination(const std::filesystem::path& dir, const std::string& name);

}  // namespace pcp
