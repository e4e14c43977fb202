#include "pcp/transfer.hpp"

#include <cerrno>
#include <fstream>
#include <system_error>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "pcp/error.hpp"

namespace pcp {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kDrainWatermark = 1 << 20;

Bytes app_message(AppMessage type, ByteView payload = {}) {
  Bytes out;
  out.reserve(1 + payload.size());
  out.push_back(static_cast<std::uint8_t>(type));
  append(out, payload);
  return out;
}

/// Receives one application message, mapping channel failures to transfer_error.
Task<Bytes> next_message(SecureChannel& chan, TimePoint deadline, const char* waiting_for) {
  std::string why;
  try {
    Bytes msg = co_await chan.receive(deadline);
    if (msg.empty()) {
      chan.abort("empty application message");
      fail(Errc::transfer_error, "empty application message");
    }
    co_return msg;
  } catch (const Error& e) {
    if (e.code() == Errc::transfer_error) throw;
    why = e.what();
  }
  fail(Errc::transfer_error, std::string("channel failed while waiting for ") + waiting_for + ": " + why);
}

TransferOutcome aborted(std::uint64_t bytes, std::string detail) {
  TransferOutcome out;
  out.status = TransferStatus::aborted;
  out.bytes_received = bytes;
  out.detail = std::move(detail);
  return out;
}

void remove_quietly(const fs::path& p) {
  std::error_code ec;
  fs::remove(p, ec);
}

/// Moves tmp to a free name next to it without ever replacing a file.
fs::path publish_file(const fs::path& tmp, const fs::path& dir, const std::string& name) {
  for (int attempt = 0; attempt < 10'000; ++attempt) {
    fs::path dest = unique_destination(dir, name);
    if (::link(tmp.c_str(), dest.c_str()) == 0) {
      remove_quietly(tmp);
      return dest;
    }
    if (errno == EEXIST) continue;
    // Filesystems without hard links: fall back to a checked rename.
    std::error_code ec;
    fs::rename(tmp, dest, ec);
    if (ec) fail(Errc::io_error, "cannot move received file to " + dest.string() + ": " + ec.message());
    return dest;
  }
  fail(Errc::io_error, "no free destination name for " + name);
}

}  // namespace

bool is_valid_filename(std::string_view name) {
  if (name.empty() || name.size() > kMaxFilenameBytes) return false;
  if (name == "." || name == "..") return false;
  for (char c : name) {
    if (c == '/' || c == '\\' || c == '\0') return false;
  }
  return true;
}

TransferManifest::TransferManifest(std::string filename, std::uint64_t size, crypto::Digest content_digest,
                                   std::uint32_t chunk_size)
    : filename_(std::move(filename)), size_(size), digest_(content_digest), chunk_size_(chunk_size) {
  if (!is_valid_filename(filename_)) fail(Errc::invalid_argument, "invalid file name \"" + filename_ + "\"");
  if (chunk_size_ == 0 || chunk_size_ > kMaxChunkSize) {
    fail(Errc::invalid_argument, "chunk size must be in [1, " + std::to_string(kMaxChunkSize) + "]");
  }
}

std::string TransferManifest::to_json() const {
  nlohmann::json j;
  j["name"] = filename_;
  j["size"] = size_;
  j["sha256"] = to_hex(digest_);
  j["chunk"] = chunk_size_;
  return j.dump();
}

TransferManifest TransferManifest::from_json(std::string_view text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail(Errc::parse_error, "manifest is not a JSON object");
  auto field = [&](const char* key) -> const nlohmann::json& {
    auto it = j.find(key);
    if (it == j.end()) fail(Errc::parse_error, std::string("manifest lacks \"") + key + "\"");
    return *it;
  };
  const auto& name = field("name");
  const auto& size = field("size");
  const auto& sha = field("sha256");
  const auto& chunk = field("chunk");
  if (!name.is_string() || !size.is_number_unsigned() || !sha.is_string() || !chunk.is_number_unsigned()) {
    fail(Errc::parse_error, "manifest field has the wrong type");
  }
  Bytes digest_bytes = from_hex(sha.get<std::string>());
  if (digest_bytes.size() != 32) fail(Errc::parse_error, "manifest sha256 is not 32 bytes");
  crypto::Digest digest{};
  std::copy(digest_bytes.begin(), digest_bytes.end(), digest.begin());
  auto chunk_size = chunk.get<std::uint64_t>();
  if (chunk_size > kMaxChunkSize) fail(Errc::parse_error, "manifest chunk size out of range");
  try {
    return TransferManifest(name.get<std::string>(), size.get<std::uint64_t>(), digest,
                            static_cast<std::uint32_t>(chunk_size));
  } catch (const Error& e) {
    fail(Errc::parse_error, e.what());
  }
}

TransferManifest make_manifest(const fs::path& file, std::uint32_t chunk_size) {
  std::error_code ec;
  if (!fs::is_regular_file(file, ec)) fail(Errc::io_error, "not a readable file: " + file.string());
  std::ifstream in(file, std::ios::binary);
  if (!in) fail(Errc::io_error, "cannot open " + file.string());
  crypto::Sha256 hasher;
  std::uint64_t size = 0;
  Bytes buf(1 << 16);
  while (in) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    auto got = static_cast<std::size_t>(in.gcount());
    hasher.update(ByteView(buf.data(), got));
    size += got;
  }
  if (in.bad()) fail(Errc::io_error, "read error on " + file.string());
  return TransferManifest(file.filename().string(), size, hasher.finish(), chunk_size);
}

std::string_view to_string(TransferStatus status) {
  switch (status) {
    case TransferStatus::completed:
      return "completed";
    case TransferStatus::rejected:
      return "rejected";
    case TransferStatus::aborted:
      return "aborted";
  }
  return "?";
}

Task<std::optional<Decision>> ScriptedDecision::decide(const TransferManifest&, TimePoint deadline) {
  ++prompts_;
  if (mode_ == Mode::silent) {
    co_await sleep_until(ex_, deadline);
    co_return std::nullopt;
  }
  TimePoint answer_at = deadline_after(ex_.now(), think_);
  if (answer_at > deadline) {
    co_await sleep_until(ex_, deadline);
    co_return std::nullopt;
  }
  co_await sleep_until(ex_, answer_at);
  co_return mode_ == Mode::accept ? Decision::accept : Decision::reject;
}

Task<Decision> send_manifest(SecureChannel& chan, const TransferManifest& manifest, TimePoint deadline) {
  try {
    chan.send(app_message(AppMessage::manifest, as_bytes(manifest.to_json())));
  } catch (const Error& e) {
    fail(Errc::transfer_error, std::string("cannot send manifest: ") + e.what());
  }
  Bytes reply = co_await next_message(chan, deadline, "the receiver's decision");
  if (reply.size() == 1 && reply[0] == static_cast<std::uint8_t>(AppMessage::accept)) co_return Decision::accept;
  if (reply.size() == 1 && reply[0] == static_cast<std::uint8_t>(AppMessage::reject)) co_return Decision::reject;
  chan.abort("unexpected reply to manifest");
  fail(Errc::transfer_error, "unexpected reply to manifest");
}

Task<TransferManifest> receive_manifest(SecureChannel& chan, TimePoint deadline) {
  Bytes msg = co_await next_message(chan, deadline, "the manifest");
  if (msg[0] != static_cast<std::uint8_t>(AppMessage::manifest)) {
    chan.abort("expected a manifest");
    fail(Errc::transfer_error, "expected a manifest");
  }
  std::string_view text(reinterpret_cast<const char*>(msg.data() + 1), msg.size() - 1);
  try {
    co_return TransferManifest::from_json(text);
  } catch (const Error& e) {
    chan.abort("bad manifest");
    fail(Errc::transfer_error, std::string("bad manifest: ") + e.what());
  }
}

Task<Decision> await_confirmation(SecureChannel& chan, const TransferManifest& manifest, DecisionSource& decisions,
                                  TimePoint deadline) {
  std::optional<Decision> answer = co_await decisions.decide(manifest, deadline);
  Decision d = answer.value_or(Decision::reject);
  try {
    chan.send(app_message(d == Decision::accept ? AppMessage::accept : AppMessage::reject));
  } catch (const Error& e) {
    fail(Errc::transfer_error, std::string("cannot send decision: ") + e.what());
  }
  co_return d;
}

Task<TransferOutcome> stream_file(SecureChannel& chan, fs::path file, TransferManifest manifest,
                                  StreamOptions options) {
  Executor& ex = chan.connection()->executor();
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    chan.abort("source unreadable");
    co_return aborted(0, "cannot open " + file.string());
  }
  auto progress = [&](std::uint64_t done) {
    if (options.progress) options.progress(done, manifest.size());
  };

  std::uint64_t sent = 0;
  progress(0);
  Bytes buf(manifest.chunk_size());
  std::string failure;
  try {
    while (sent < manifest.size()) {
      auto want = static_cast<std::size_t>(std::min<std::uint64_t>(manifest.chunk_size(), manifest.size() - sent));
      in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(want));
      if (static_cast<std::size_t>(in.gcount()) != want) fail(Errc::io_error, "source file shrank while sending");
      Bytes msg;
      msg.reserve(1 + 8 + want);
      msg.push_back(static_cast<std::uint8_t>(AppMessage::chunk));
      put_u64_be(msg, sent);
      append(msg, ByteView(buf.data(), want));
      chan.send(msg);
      sent += want;
      progress(sent);
      co_await chan.connection()->wait_drained(kDrainWatermark, deadline_after(ex.now(), options.idle_timeout));
    }
    chan.send(app_message(AppMessage::end));
    // The receiver closes only after the digest checks out and the file is saved.
    co_await chan.connection()->await_peer_close(deadline_after(ex.now(), options.idle_timeout));
  } catch (const Error& e) {
    failure = e.what();
  }
  if (!failure.empty()) {
    chan.abort(failure);
    co_return aborted(sent, failure);
  }
  chan.close();
  TransferOutcome out;
  out.status = TransferStatus::completed;
  out.bytes_received = sent;
  out.digest_verified = true;
  co_return out;
}

Task<TransferOutcome> receive_file(SecureChannel& chan, TransferManifest manifest, fs::path dest_dir,
                                   StreamOptions options) {
  Executor& ex = chan.connection()->executor();
  std::error_code ec;
  fs::create_directories(dest_dir, ec);
  fs::path tmp = unique_destination(dest_dir, ".pcp-" + to_hex(manifest.content_digest()).substr(0, 16) + ".part");
  std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
  if (!out) {
    chan.abort("cannot create destination");
    co_return aborted(0, "cannot create " + tmp.string());
  }
  auto progress = [&](std::uint64_t done) {
    if (options.progress) options.progress(done, manifest.size());
  };

  crypto::Sha256 hasher;
  std::uint64_t received = 0;
  std::string failure;
  fs::path saved;
  progress(0);
  try {
    for (;;) {
      Bytes msg = co_await next_message(chan, deadline_after(ex.now(), options.idle_timeout), "file data");
      auto type = static_cast<AppMessage>(msg[0]);
      if (type == AppMessage::end) {
        if (msg.size() != 1) fail(Errc::transfer_error, "end frame carries a payload");
        break;
      }
      if (type != AppMessage::chunk || msg.size() < 9) fail(Errc::transfer_error, "expected a chunk");
      std::uint64_t offset = get_u64_be(ByteView(msg).subspan(1, 8));
      ByteView data = ByteView(msg).subspan(9);
      if (offset != received) fail(Errc::transfer_error, "chunk out of order");
      if (data.size() > manifest.chunk_size()) fail(Errc::transfer_error, "chunk larger than announced");
      if (data.size() > manifest.size() - received) fail(Errc::transfer_error, "more data than announced");
      out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
      if (!out) fail(Errc::io_error, "write failed on " + tmp.string());
      hasher.update(data);
      received += data.size();
      progress(received);
    }
    if (received != manifest.size()) fail(Errc::transfer_error, "stream ended early");
    out.close();
    if (!out) fail(Errc::io_error, "write failed on " + tmp.string());
    if (!crypto::equal(hasher.finish(), manifest.content_digest())) {
      fail(Errc::transfer_error, "content digest mismatch");
    }
    saved = publish_file(tmp, dest_dir, manifest.filename());
  } catch (const Error& e) {
    failure = e.what();
  }
  if (!failure.empty()) {
    out.close();
    remove_quietly(tmp);
    chan.abort(failure);
    co_return aborted(received, failure);
  }
  chan.close();
  TransferOutcome result;
  result.status = TransferStatus::completed;
  result.bytes_received = received;
  result.digest_verified = true;
  result.saved_as = saved;
  co_return result;
}

fs::path unique_destination(const fs::path& dir, const std::string& name) {
  fs::path candidate = dir / name;
  std::error_code ec;
  if (!fs::exists(fs::symlink_status(candidate, ec))) return candidate;
  fs::path base(name);
  std::string stem = base.stem().string();
  std::string ext = base.extension().string();
  for (int n = 1;; ++n) {
    candidate = dir / (stem + " (" + std::to_string(n) + ")" + ext);
    if (!fs::exists(fs::symlink_status(candidate, ec))) return candidate;
  }
}

}  // namespace pcp
