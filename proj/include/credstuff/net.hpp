#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "credstuff/bytes.hpp"
#include "credstuff/cuckoo.hpp"
#include "credstuff/detect.hpp"
#include "credstuff/pmt.hpp"
#include "credstuff/rng.hpp"

namespace credstuff::net {

// Directory-coordinated membership polling over length-prefixed binary
// frames: responders register with a directory, requesters send one
// membership query which the directory fans out to every registered
// responder and returns as an anonymized, freshly shuffled batch.

// --- framing -----------------------------------------------------------------

inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::uint32_t kMaxFramePayload = 1u << 24;

enum class FrameType : std::uint8_t {
  register_req = 1,  // responder -> directory; reply reuses the tag
  query = 2,         // requester -> directory
  fanout = 3,        // directory -> responder
  response = 4,      // responder -> directory
  batch = 5,         // directory -> requester
  audit = 6,         // admin -> directory; reply reuses the tag
  error = 7,
};

struct Frame {
  FrameType type = FrameType::error;
  std::uint8_t version = kProtocolVersion;
  Bytes payload;
};

struct NetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TimeoutError : NetError {
  using NetError::NetError;
};
struct ProtocolError : NetError {
  using NetError::NetError;
};

// [u32 length = payload + 2][u8 type][u8 version][payload]
Bytes encode_frame(const Frame& f);

// --- wire payloads -----------------------------------------------------------

using AccountHash = std::array<std::uint8_t, 32>;

enum class ErrorCode : std::uint8_t {
  rate_limited = 1,
  no_responders = 2,
  malformed = 3,
  version_mismatch = 4,
  not_approved = 5,
  internal = 6,
  challenge_required = 7,
  params_mismatch = 8,
};

struct ErrorPayload {
  ErrorCode code = ErrorCode::internal;
  std::uint32_t retry_after_ms = 0;
  std::string message;
};

enum class RegisterStatus : std::uint8_t {
  ok = 0,
  duplicate_member = 1,
  limit_exceeded = 2,
  not_approved = 3,
};

struct RegisterRequest {
  std::string member_id;
  std::string address;  // host:port the directory will contact
  AccountHash account{};
};

struct QueryEnvelope {
  AccountHash account{};
  std::uint32_t params_version = 0;
  std::string member_id;  // requester's own membership, for exclusion; may be empty
  Bytes query;            // encoded membership query, opaque to the directory
};

struct BatchPayload {
  std::vector<Bytes> responses;  // encoded responses, freshly shuffled, no sources
  std::uint32_t timeouts = 0;
};

struct AuditVerdict {
  std::string member_id;
  bool flagged = false;
};

Bytes encode_error(const ErrorPayload& e);
ErrorPayload decode_error(ByteView b);
Bytes encode_register(const RegisterRequest& r);
RegisterRequest decode_register(ByteView b);
Bytes encode_envelope(const QueryEnvelope& e);
QueryEnvelope decode_envelope(ByteView b);
Bytes encode_batch(const BatchPayload& b);
BatchPayload decode_batch(ByteView b);
Bytes encode_audit_request(const AccountHash& account);
AccountHash decode_audit_request(ByteView b);
Bytes encode_audit_verdicts(const std::vector<AuditVerdict>& v);
std::vector<AuditVerdict> decode_audit_verdicts(ByteView b);

// Membership-query codecs: group id byte, public key, f, then the two
// indicator columns bucket by bucket.  decode enforces group membership of
// every component.
Bytes encode_query(const pmt::PmtQuery& q);
pmt::PmtQuery decode_query(ByteView b);
Bytes encode_response(const crypto::Group& g, const pmt::PmtResponse& r);
pmt::PmtResponse decode_response(const crypto::Group& g, ByteView b);

// Uniform random reordering of a batch before release.
void shuffle_batch(std::vector<Bytes>& responses, Rng& rng);

// --- sockets -----------------------------------------------------------------

// Blocking-with-deadline TCP socket (RAII over a file descriptor).
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Socket& operator=(Socket&& o) noexcept;
  ~Socket();
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }
  void close();

  // "host:port"; throws NetError / TimeoutError.
  static Socket connect_to(const std::string& host_port, int timeout_ms);

  void send_all(ByteView data, int timeout_ms);
  // Reads exactly n bytes; false on clean EOF at offset 0, throws on timeout
  // or mid-record EOF.
  bool recv_exact(std::uint8_t* out, std::size_t n, int timeout_ms);

 private:
  int fd_ = -1;
};

class Listener {
 public:
  // Binds 127.0.0.1; port 0 picks an ephemeral port.
  static Listener bind_loopback(std::uint16_t port);
  std::uint16_t port() const { return port_; }
  // Throws TimeoutError when nothing arrives in time, NetError once closed.
  Socket accept(int timeout_ms);
  void close();
  ~Listener();
  Listener(Listener&& o) noexcept : fd_(o.fd_), port_(o.port_) { o.fd_ = -1; }
  Listener(const Listener&) = delete;

 private:
  Listener(int fd, std::uint16_t port) : fd_(fd), port_(port) {}
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

void send_frame(Socket& s, FrameType type, ByteView payload, int timeout_ms);
// Validates length bounds and the type tag; the version byte is preserved
// for the caller to check.
Frame recv_frame(Socket& s, int timeout_ms);

// CONNECT through a SOCKS5 proxy (no authentication), returning a socket
// whose stream reaches dest (an IPv4 "host:port").
Socket socks5_connect(const std::string& proxy_host_port, const std::string& dest_host_port,
                      int timeout_ms);

// --- rate limiting -----------------------------------------------------------

// Token bucket: `rate` tokens per second up to `burst`; starts full.
class TokenBucket {
 public:
  TokenBucket(double rate, double burst) : rate_(rate), burst_(burst), tokens_(burst) {}
  bool try_consume(double now_seconds);
  // Seconds until a token will be available again (0 when one is ready).
  double retry_after(double now_seconds) const;

 private:
  double rate_, burst_, tokens_;
  double last_ = 0;
  bool started_ = false;
};

// --- directory ---------------------------------------------------------------

struct DirectoryConfig {
  std::map<std::string, std::string> allowlist;  // member id -> expected address ("" = any)
  cuckoo::FilterParams params;
  std::uint32_t params_version = 1;
  crypto::GroupId group = crypto::GroupId::p256;
  std::uint32_t per_account_cap = 64;
  int responder_timeout_ms = 2000;
  int batch_timeout_ms = 5000;
  double escalate_rate = 10.0;   // queries per second per account before challenges
  double escalate_burst = 20.0;
};

struct NoResponders : NetError {
  using NetError::NetError;
};
struct ChallengeRequired : NetError {
  using NetError::NetError;
};

class DirectoryServer {
 public:
  explicit DirectoryServer(DirectoryConfig cfg);
  ~DirectoryServer();

  // Binds a loopback port (0 = pick an ephemeral one) and serves until stop().
  void start(std::uint16_t port = 0);
  void stop();
  std::uint16_t port() const;

  // In-process operations; the socket handlers call exactly these.
  RegisterStatus register_member(const std::string& member_id, const std::string& address,
                                 const AccountHash& account);
  struct ForwardResult {
    std::vector<Bytes> responses;
    std::uint32_t timeouts = 0;
  };
  // Fans out to every registered responder except excluded_member, collects
  // within the batch deadline, and shuffles.  Throws NoResponders.
  ForwardResult forward(const AccountHash& account, const std::string& excluded_member,
                        ByteView query_bytes);
  // Probes every registered responder with a query for a uniformly random
  // element, unshuffled, and decodes each response under the directory's own
  // throwaway key; an affirmative response flags the responder.
  std::vector<AuditVerdict> audit(const AccountHash& account);
  // False when the account's recent query rate demands a challenge.
  bool escalation_gate(const AccountHash& account);

  std::vector<std::pair<std::string, std::string>> responders_for(const AccountHash& account);

 private:
  void serve_loop();
  void handle_connection(Socket s);

  DirectoryConfig cfg_;
  std::unique_ptr<Listener> listener_;
  std::thread accept_thread_;
  std::mutex mu_;                  // registrations + escalation buckets
  std::map<std::array<std::uint8_t, 32>,
           std::vector<std::pair<std::string, std::string>>>
      registrations_;              // account -> (member, address), insertion order
  std::map<std::array<std::uint8_t, 32>, TokenBucket> escalation_;
  std::mutex rng_mu_;
  SystemRng rng_;
  std::mutex threads_mu_;
  std::vector<std::thread> workers_;
  bool running_ = false;
};

// --- responder ---------------------------------------------------------------

struct ResponderConfig {
  cuckoo::FilterParams params;
  std::uint32_t params_version = 1;
  crypto::GroupId group = crypto::GroupId::p256;
  double rate = 20.0;  // queries per second per account
  double burst = 40.0;
};

class ResponderServer {
 public:
  explicit ResponderServer(ResponderConfig cfg);
  ~ResponderServer();

  void start(std::uint16_t port = 0);
  void stop();
  std::uint16_t port() const;
  std::string address() const;  // "127.0.0.1:port"

  // Installs (or replaces) the tracked set served for an account hash.
  void put_account(const AccountHash& account, detect::SuspiciousSet set);
  // Runs fn under the account's lock with the live set; creates the account
  // with an empty set if absent.
  void with_account(const AccountHash& account,
                    const std::function<void(detect::SuspiciousSet&)>& fn);

 private:
  struct AccountEntry {
    std::mutex mu;
    detect::SuspiciousSet set;
    TokenBucket bucket;
    AccountEntry(detect::SuspiciousSet s, double rate, double burst)
        : set(std::move(s)), bucket(rate, burst) {}
  };

  void serve_loop();
  void handle_connection(Socket s);
  Bytes respond_for(const QueryEnvelope& env);  // RESPONSE payload
  AccountEntry& entry_for(const AccountHash& account);

  ResponderConfig cfg_;
  std::unique_ptr<Listener> listener_;
  std::thread accept_thread_;
  std::mutex mu_;  // accounts map
  std::map<std::array<std::uint8_t, 32>, std::unique_ptr<AccountEntry>> accounts_;
  std::mutex rng_mu_;
  SystemRng rng_;
  std::mutex threads_mu_;
  std::vector<std::thread> workers_;
  bool running_ = false;
};

// --- requester ---------------------------------------------------------------

struct RequesterConfig {
  std::string directory;  // "host:port"
  std::string proxy;      // optional SOCKS5 "host:port"; empty = direct
  AccountHash account{};
  std::string member_id;  // for self-exclusion; may be empty
  cuckoo::FilterParams params;
  std::uint32_t params_version = 1;
  crypto::GroupId group = crypto::GroupId::p256;
  int timeout_ms = 8000;
};

struct PollOutcome {
  std::vector<bool> votes;
  std::uint32_t timeouts = 0;
};

// One full query round trip: build, send, decode the batch, decrypt votes.
PollOutcome poll_responders(const RequesterConfig& cfg, ByteView element, Rng& rng);

// Registers a member with a remote directory over the wire; returns the
// directory's verdict.  Throws NetError / TimeoutError on transport failure.
RegisterStatus register_remote(const std::string& directory_host_port, const RegisterRequest& req,
                               int timeout_ms);

// detect::QueryChannel over the directory; network failures surface as
// detect::DirectoryUnavailable so the counting phase can report them.
class DirectoryChannel final : public detect::QueryChannel {
 public:
  explicit DirectoryChannel(RequesterConfig cfg) : cfg_(std::move(cfg)) {}
  std::vector<bool> membership_votes(ByteView element) override;

 private:
  RequesterConfig cfg_;
};

}  // namespace credstuff::net
