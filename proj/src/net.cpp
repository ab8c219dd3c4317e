#include "credstuff/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>

#include "credstuff/elgamal.hpp"

namespace credstuff::net {

namespace {

using Clock = std::chrono::steady_clock;

double now_seconds() {
  return std::chrono::duration<double>(Clock::now().time_since_epoch()).count();
}

struct Deadline {
  Clock::time_point at;
  explicit Deadline(int timeout_ms) : at(Clock::now() + std::chrono::milliseconds(timeout_ms)) {}
  int remaining_ms() const {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(at - Clock::now()).count();
    return left > 0 ? static_cast<int>(left) : 0;
  }
  bool expired() const { return Clock::now() >= at; }
};

void set_nonblocking(int fd) {
  int flags = fcntl(fd, F_GETFL, 0);
  if (flags < 0 || fcntl(fd, F_SETFL, flags | O_NONBLOCK) < 0) {
    throw NetError("failed to set socket nonblocking");
  }
}

// "host:port" with an IPv4 literal host.
sockaddr_in parse_addr(const std::string& host_port) {
  auto colon = host_port.rfind(':');
  if (colon == std::string::npos || colon + 1 >= host_port.size()) {
    throw NetError("address must be host:port, got '" + host_port + "'");
  }
  std::string host = host_port.substr(0, colon);
  unsigned long port = 0;
  try {
    port = std::stoul(host_port.substr(colon + 1));
  } catch (const std::exception&) {
    throw NetError("bad port in '" + host_port + "'");
  }
  if (port == 0 || port > 65535) throw NetError("port out of range in '" + host_port + "'");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw NetError("host must be an IPv4 literal, got '" + host + "'");
  }
  return addr;
}

void poll_or_throw(int fd, short events, const Deadline& dl, const char* what) {
  pollfd pfd{fd, events, 0};
  int left = dl.remaining_ms();
  if (left <= 0) throw TimeoutError(std::string(what) + ": deadline exceeded");
  int rc = ::poll(&pfd, 1, left);
  if (rc == 0) throw TimeoutError(std::string(what) + ": deadline exceeded");
  if (rc < 0) throw NetError(std::string(what) + ": poll failed: " + std::strerror(errno));
}

}  // namespace

// --- Socket ------------------------------------------------------------------

Socket& Socket::operator=(Socket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.fd_;
    o.fd_ = -1;
  }
  return *this;
}

Socket::~Socket() { close(); }

void Socket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

Socket Socket::connect_to(const std::string& host_port, int timeout_ms) {
  sockaddr_in addr = parse_addr(host_port);
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw NetError("socket() failed");
  Socket s(fd);
  set_nonblocking(fd);
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  Deadline dl(timeout_ms);
  int rc = ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  if (rc < 0) {
    if (errno != EINPROGRESS) {
      throw NetError("connect to " + host_port + " failed: " + std::strerror(errno));
    }
    poll_or_throw(fd, POLLOUT, dl, "connect");
    int err = 0;
    socklen_t len = sizeof err;
    if (getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len) < 0 || err != 0) {
      throw NetError("connect to " + host_port + " failed: " + std::strerror(err));
    }
  }
  return s;
}

void Socket::send_all(ByteView data, int timeout_ms) {
  Deadline dl(timeout_ms);
  std::size_t sent = 0;
  while (sent < data.size()) {
    poll_or_throw(fd_, POLLOUT, dl, "send");
    ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) continue;
      throw NetError(std::string("send failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

bool Socket::recv_exact(std::uint8_t* out, std::size_t n, int timeout_ms) {
  Deadline dl(timeout_ms);
  std::size_t got = 0;
  while (got < n) {
    poll_or_throw(fd_, POLLIN, dl, "recv");
    ssize_t r = ::recv(fd_, out + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw NetError("connection closed mid-record");
    }
    if (r < 0) {
      if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) continue;
      throw NetError(std::string("recv failed: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

// --- Listener ----------------------------------------------------------------

Listener Listener::bind_loopback(std::uint16_t port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw NetError("socket() failed");
  int one = 1;
  setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    ::close(fd);
    throw NetError(std::string("bind failed: ") + std::strerror(errno));
  }
  if (::listen(fd, 64) < 0) {
    ::close(fd);
    throw NetError("listen failed");
  }
  socklen_t len = sizeof addr;
  if (getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) < 0) {
    ::close(fd);
    throw NetError("getsockname failed");
  }
  set_nonblocking(fd);
  return Listener(fd, ntohs(addr.sin_port));
}

Socket Listener::accept(int timeout_ms) {
  if (fd_ < 0) throw NetError("listener closed");
  Deadline dl(timeout_ms);
  poll_or_throw(fd_, POLLIN, dl, "accept");
  int cfd = ::accept(fd_, nullptr, nullptr);
  if (cfd < 0) throw NetError(std::string("accept failed: ") + std::strerror(errno));
  set_nonblocking(cfd);
  int one = 1;
  setsockopt(cfd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return Socket(cfd);
}

void Listener::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

Listener::~Listener() { close(); }

// --- framing -----------------------------------------------------------------

Bytes encode_frame(const Frame& f) {
  if (f.payload.size() > kMaxFramePayload) throw ProtocolError("frame payload too large");
  Bytes out;
  out.reserve(f.payload.size() + 6);
  put_u32(out, static_cast<std::uint32_t>(f.payload.size() + 2));
  out.push_back(static_cast<std::uint8_t>(f.type));
  out.push_back(f.version);
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  return out;
}

void send_frame(Socket& s, FrameType type, ByteView payload, int timeout_ms) {
  Frame f;
  f.type = type;
  f.payload.assign(payload.begin(), payload.end());
  s.send_all(encode_frame(f), timeout_ms);
}

Frame recv_frame(Socket& s, int timeout_ms) {
  std::uint8_t hdr[4];
  if (!s.recv_exact(hdr, sizeof hdr, timeout_ms)) throw NetError("connection closed");
  std::uint32_t len = load_u32(hdr);
  if (len < 2 || len > kMaxFramePayload + 2) throw ProtocolError("frame length out of bounds");
  Bytes body(len);
  if (!s.recv_exact(body.data(), body.size(), timeout_ms)) {
    throw NetError("connection closed mid-frame");
  }
  std::uint8_t tag = body[0];
  if (tag < 1 || tag > 7) throw ProtocolError("unknown frame tag");
  Frame f;
  f.type = static_cast<FrameType>(tag);
  f.version = body[1];
  f.payload.assign(body.begin() + 2, body.end());
  return f;
}

// --- payload codecs ----------------------------------------------------------

namespace {

void put_str16(Bytes& out, const std::string& s) {
  if (s.size() > 0xffff) throw ProtocolError("string field too long");
  put_u16(out, static_cast<std::uint16_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

std::string read_str16(ByteReader& r) {
  std::uint16_t n = r.u16();
  ByteView v = r.take(n);
  return std::string(v.begin(), v.end());
}

AccountHash read_account(ByteReader& r) {
  AccountHash a{};
  ByteView v = r.take(a.size());
  std::copy(v.begin(), v.end(), a.begin());
  return a;
}

void require_done(const ByteReader& r) {
  if (!r.done()) throw ProtocolError("trailing bytes in payload");
}

crypto::Elt read_elt(ByteReader& r, const crypto::Group& g) {
  auto e = g.decode(r.take(g.elt_size()));
  if (!e) throw ProtocolError("encoded element is not a group member");
  return *e;
}

crypto::Ciphertext read_ct(ByteReader& r, const crypto::Group& g) {
  crypto::Ciphertext c;
  c.V = read_elt(r, g);
  c.W = read_elt(r, g);
  return c;
}

void put_ct(Bytes& out, const crypto::Group& g, const crypto::Ciphertext& c) {
  Bytes v = g.encode(c.V), w = g.encode(c.W);
  out.insert(out.end(), v.begin(), v.end());
  out.insert(out.end(), w.begin(), w.end());
}

}  // namespace

Bytes encode_error(const ErrorPayload& e) {
  Bytes out;
  out.push_back(static_cast<std::uint8_t>(e.code));
  put_u32(out, e.retry_after_ms);
  put_str16(out, e.message);
  return out;
}

ErrorPayload decode_error(ByteView b) {
  ByteReader r(b);
  ErrorPayload e;
  std::uint8_t code = r.u8();
  if (code < 1 || code > 8) throw ProtocolError("unknown error code");
  e.code = static_cast<ErrorCode>(code);
  e.retry_after_ms = r.u32();
  e.message = read_str16(r);
  require_done(r);
  return e;
}

Bytes encode_register(const RegisterRequest& req) {
  Bytes out;
  put_str16(out, req.member_id);
  put_str16(out, req.address);
  out.insert(out.end(), req.account.begin(), req.account.end());
  return out;
}

RegisterRequest decode_register(ByteView b) {
  ByteReader r(b);
  RegisterRequest req;
  req.member_id = read_str16(r);
  req.address = read_str16(r);
  req.account = read_account(r);
  require_done(r);
  return req;
}

Bytes encode_envelope(const QueryEnvelope& e) {
  Bytes out;
  out.insert(out.end(), e.account.begin(), e.account.end());
  put_u32(out, e.params_version);
  put_str16(out, e.member_id);
  out.insert(out.end(), e.query.begin(), e.query.end());
  return out;
}

QueryEnvelope decode_envelope(ByteView b) {
  ByteReader r(b);
  QueryEnvelope e;
  e.account = read_account(r);
  e.params_version = r.u32();
  e.member_id = read_str16(r);
  ByteView rest = r.take(r.remaining());
  e.query.assign(rest.begin(), rest.end());
  return e;
}

Bytes encode_batch(const BatchPayload& b) {
  Bytes out;
  put_u32(out, b.timeouts);
  put_u32(out, static_cast<std::uint32_t>(b.responses.size()));
  for (const Bytes& resp : b.responses) {
    put_u32(out, static_cast<std::uint32_t>(resp.size()));
    out.insert(out.end(), resp.begin(), resp.end());
  }
  return out;
}

BatchPayload decode_batch(ByteView b) {
  ByteReader r(b);
  BatchPayload out;
  out.timeouts = r.u32();
  std::uint32_t count = r.u32();
  if (count > 1u << 16) throw ProtocolError("batch response count out of bounds");
  out.responses.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t len = r.u32();
    ByteView v = r.take(len);
    out.responses.emplace_back(v.begin(), v.end());
  }
  require_done(r);
  return out;
}

Bytes encode_audit_request(const AccountHash& account) {
  return Bytes(account.begin(), account.end());
}

AccountHash decode_audit_request(ByteView b) {
  ByteReader r(b);
  AccountHash a = read_account(r);
  require_done(r);
  return a;
}

Bytes encode_audit_verdicts(const std::vector<AuditVerdict>& v) {
  Bytes out;
  put_u32(out, static_cast<std::uint32_t>(v.size()));
  for (const AuditVerdict& a : v) {
    put_str16(out, a.member_id);
    out.push_back(a.flagged ? 1 : 0);
  }
  return out;
}

std::vector<AuditVerdict> decode_audit_verdicts(ByteView b) {
  ByteReader r(b);
  std::uint32_t count = r.u32();
  if (count > 1u << 16) throw ProtocolError("verdict count out of bounds");
  std::vector<AuditVerdict> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    AuditVerdict v;
    v.member_id = read_str16(r);
    std::uint8_t f = r.u8();
    if (f > 1) throw ProtocolError("verdict flag out of range");
    v.flagged = f == 1;
    out.push_back(std::move(v));
  }
  require_done(r);
  return out;
}

Bytes encode_query(const pmt::PmtQuery& q) {
  const crypto::Group& g = q.pk.group();
  Bytes out;
  out.push_back(static_cast<std::uint8_t>(q.pk.gid));
  Bytes u = g.encode(q.pk.U);
  out.insert(out.end(), u.begin(), u.end());
  put_ct(out, g, q.f);
  put_u32(out, static_cast<std::uint32_t>(q.q.size()));
  for (const auto& bucket : q.q) {
    put_ct(out, g, bucket[0]);
    put_ct(out, g, bucket[1]);
  }
  return out;
}

pmt::PmtQuery decode_query(ByteView b) {
  ByteReader r(b);
  std::uint8_t gid = r.u8();
  if (gid != static_cast<std::uint8_t>(crypto::GroupId::tiny) &&
      gid != static_cast<std::uint8_t>(crypto::GroupId::p256)) {
    throw ProtocolError("unknown group id");
  }
  const crypto::Group& g = crypto::Group::by_id(static_cast<crypto::GroupId>(gid));
  pmt::PmtQuery q;
  q.pk.gid = static_cast<crypto::GroupId>(gid);
  q.pk.U = read_elt(r, g);
  q.f = read_ct(r, g);
  std::uint32_t beta = r.u32();
  if (beta < 1 || beta > 1u << 16) throw ProtocolError("bucket count out of bounds");
  q.q.resize(beta);
  for (std::uint32_t i = 0; i < beta; ++i) {
    q.q[i][0] = read_ct(r, g);
    q.q[i][1] = read_ct(r, g);
  }
  require_done(r);
  return q;
}

Bytes encode_response(const crypto::Group& g, const pmt::PmtResponse& resp) {
  Bytes out;
  put_u32(out, static_cast<std::uint32_t>(resp.entries.size()));
  for (const crypto::Ciphertext& c : resp.entries) put_ct(out, g, c);
  return out;
}

pmt::PmtResponse decode_response(const crypto::Group& g, ByteView b) {
  ByteReader r(b);
  std::uint32_t count = r.u32();
  if (count < 1 || count > 1u << 20) throw ProtocolError("response entry count out of bounds");
  pmt::PmtResponse resp;
  resp.entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) resp.entries.push_back(read_ct(r, g));
  require_done(r);
  return resp;
}

void shuffle_batch(std::vector<Bytes>& responses, Rng& rng) { rng.shuffle(responses); }

// --- SOCKS5 ------------------------------------------------------------------

Socket socks5_connect(const std::string& proxy_host_port, const std::string& dest_host_port,
                      int timeout_ms) {
  Socket s = Socket::connect_to(proxy_host_port, timeout_ms);
  const std::uint8_t greeting[3] = {5, 1, 0};  // version 5, one method: no auth
  s.send_all(ByteView(greeting, 3), timeout_ms);
  std::uint8_t choice[2];
  if (!s.recv_exact(choice, 2, timeout_ms) || choice[0] != 5 || choice[1] != 0) {
    throw NetError("proxy rejected the no-auth method");
  }
  sockaddr_in dest = parse_addr(dest_host_port);
  Bytes req = {5, 1, 0, 1};
  const auto* ip = reinterpret_cast<const std::uint8_t*>(&dest.sin_addr.s_addr);
  req.insert(req.end(), ip, ip + 4);
  const auto* port = reinterpret_cast<const std::uint8_t*>(&dest.sin_port);
  req.insert(req.end(), port, port + 2);
  s.send_all(req, timeout_ms);
  std::uint8_t head[4];
  if (!s.recv_exact(head, 4, timeout_ms) || head[0] != 5) throw NetError("bad proxy reply");
  if (head[1] != 0) throw NetError("proxy refused the connection");
  std::size_t addr_len = 0;
  if (head[3] == 1) {
    addr_len = 4 + 2;
  } else if (head[3] == 4) {
    addr_len = 16 + 2;
  } else if (head[3] == 3) {
    std::uint8_t n;
    if (!s.recv_exact(&n, 1, timeout_ms)) throw NetError("bad proxy reply");
    addr_len = n + 2u;
  } else {
    throw NetError("bad proxy address type");
  }
  Bytes skip(addr_len);
  if (!s.recv_exact(skip.data(), skip.size(), timeout_ms)) throw NetError("bad proxy reply");
  return s;
}

// --- token bucket ------------------------------------------------------------

bool TokenBucket::try_consume(double now_seconds) {
  if (!started_) {
    last_ = now_seconds;
    started_ = true;
  }
  if (now_seconds > last_) {
    tokens_ = std::min(burst_, tokens_ + (now_seconds - last_) * rate_);
    last_ = now_seconds;
  }
  if (tokens_ >= 1.0) {
    tokens_ -= 1.0;
    return true;
  }
  return false;
}

double TokenBucket::retry_after(double) const {
  if (tokens_ >= 1.0) return 0.0;
  if (rate_ <= 0.0) return 3600.0;
  return (1.0 - tokens_) / rate_;
}

// --- directory ---------------------------------------------------------------

DirectoryServer::DirectoryServer(DirectoryConfig cfg) : cfg_(std::move(cfg)) {}

DirectoryServer::~DirectoryServer() { stop(); }

void DirectoryServer::start(std::uint16_t port) {
  listener_ = std::make_unique<Listener>(Listener::bind_loopback(port));
  running_ = true;
  accept_thread_ = std::thread([this] { serve_loop(); });
}

void DirectoryServer::stop() {
  if (!running_) return;
  running_ = false;
  if (accept_thread_.joinable()) accept_thread_.join();
  if (listener_) listener_->close();
  std::vector<std::thread> workers;
  {
    std::lock_guard<std::mutex> lk(threads_mu_);
    workers.swap(workers_);
  }
  for (std::thread& t : workers) {
    if (t.joinable()) t.join();
  }
}

std::uint16_t DirectoryServer::port() const { return listener_ ? listener_->port() : 0; }

void DirectoryServer::serve_loop() {
  while (running_) {
    try {
      Socket s = listener_->accept(200);
      std::lock_guard<std::mutex> lk(threads_mu_);
      workers_.emplace_back(
          [this](Socket conn) { handle_connection(std::move(conn)); }, std::move(s));
    } catch (const TimeoutError&) {
      continue;
    } catch (const NetError&) {
      break;
    }
  }
}

void DirectoryServer::handle_connection(Socket s) {
  auto reply_error = [&](ErrorCode code, const std::string& msg, std::uint32_t retry_ms = 0) {
    ErrorPayload e{code, retry_ms, msg};
    send_frame(s, FrameType::error, encode_error(e), 2000);
  };
  while (running_) {
    Frame f;
    try {
      f = recv_frame(s, 500);
    } catch (const TimeoutError&) {
      continue;  // idle connection; re-check running_
    } catch (const NetError&) {
      return;  // closed or unparseable stream
    }
    try {
      if (f.version != kProtocolVersion) {
        reply_error(ErrorCode::version_mismatch, "unsupported protocol version");
        continue;
      }
      switch (f.type) {
        case FrameType::register_req: {
          RegisterRequest req = decode_register(f.payload);
          RegisterStatus st = register_member(req.member_id, req.address, req.account);
          Bytes payload = {static_cast<std::uint8_t>(st)};
          send_frame(s, FrameType::register_req, payload, 2000);
          break;
        }
        case FrameType::query: {
          QueryEnvelope env = decode_envelope(f.payload);
          if (env.params_version != cfg_.params_version) {
            reply_error(ErrorCode::params_mismatch, "filter parameter version mismatch");
            break;
          }
          if (!escalation_gate(env.account)) {
            reply_error(ErrorCode::challenge_required, "query rate exceeded; challenge required");
            break;
          }
          try {
            ForwardResult fr = forward(env.account, env.member_id, env.query);
            BatchPayload batch;
            batch.responses = std::move(fr.responses);
            batch.timeouts = fr.timeouts;
            send_frame(s, FrameType::batch, encode_batch(batch), 5000);
          } catch (const NoResponders&) {
            reply_error(ErrorCode::no_responders, "no registered responders for account");
          }
          break;
        }
        case FrameType::audit: {
          AccountHash account = decode_audit_request(f.payload);
          std::vector<AuditVerdict> verdicts = audit(account);
          send_frame(s, FrameType::audit, encode_audit_verdicts(verdicts), 5000);
          break;
        }
        default:
          reply_error(ErrorCode::malformed, "unexpected frame type for this role");
          break;
      }
    } catch (const ProtocolError& e) {
      reply_error(ErrorCode::malformed, e.what());
    } catch (const NetError&) {
      return;
    } catch (const std::exception& e) {
      reply_error(ErrorCode::internal, e.what());
    }
  }
}

RegisterStatus DirectoryServer::register_member(const std::string& member_id,
                                                const std::string& address,
                                                const AccountHash& account) {
  std::lock_guard<std::mutex> lk(mu_);
  auto allow = cfg_.allowlist.find(member_id);
  if (allow == cfg_.allowlist.end()) return RegisterStatus::not_approved;
  if (!allow->second.empty() && allow->second != address) return RegisterStatus::not_approved;
  auto& regs = registrations_[account];
  for (const auto& [member, addr] : regs) {
    if (member == member_id) return RegisterStatus::duplicate_member;
  }
  if (regs.size() >= cfg_.per_account_cap) return RegisterStatus::limit_exceeded;
  regs.emplace_back(member_id, address);
  return RegisterStatus::ok;
}

std::vector<std::pair<std::string, std::string>> DirectoryServer::responders_for(
    const AccountHash& account) {
  std::lock_guard<std::mutex> lk(mu_);
  auto it = registrations_.find(account);
  return it == registrations_.end() ? std::vector<std::pair<std::string, std::string>>{}
                                    : it->second;
}

namespace {

// One fan-out exchange under a single deadline covering connect, send, and
// receive; throws on any failure.
Bytes exchange_fanout(const std::string& address, const QueryEnvelope& env, int timeout_ms) {
  Deadline dl(timeout_ms);
  Socket s = Socket::connect_to(address, dl.remaining_ms());
  send_frame(s, FrameType::fanout, encode_envelope(env), dl.remaining_ms());
  Frame reply = recv_frame(s, dl.remaining_ms());
  if (reply.type != FrameType::response || reply.version != kProtocolVersion) {
    throw NetError("responder returned no usable response");
  }
  return reply.payload;
}

}  // namespace

DirectoryServer::ForwardResult DirectoryServer::forward(const AccountHash& account,
                                                        const std::string& excluded_member,
                                                        ByteView query_bytes) {
  std::vector<std::pair<std::string, std::string>> targets;
  for (auto& [member, addr] : responders_for(account)) {
    if (!excluded_member.empty() && member == excluded_member) continue;
    targets.emplace_back(member, addr);
  }
  if (targets.empty()) throw NoResponders("no responders registered for this account");

  QueryEnvelope env;
  env.account = account;
  env.params_version = cfg_.params_version;
  env.query.assign(query_bytes.begin(), query_bytes.end());

  ForwardResult out;
  Deadline batch_dl(cfg_.batch_timeout_ms);
  for (const auto& [member, addr] : targets) {
    int budget = std::min(cfg_.responder_timeout_ms, batch_dl.remaining_ms());
    if (budget <= 0) {
      ++out.timeouts;
      continue;
    }
    try {
      out.responses.push_back(exchange_fanout(addr, env, budget));
    } catch (const std::exception&) {
      // Unreachable, slow, or erroring responders all degrade the batch the
      // same way: one missing response, reported only as a count.
      ++out.timeouts;
    }
  }
  {
    std::lock_guard<std::mutex> lk(rng_mu_);
    shuffle_batch(out.responses, rng_);
  }
  return out;
}

std::vector<AuditVerdict> DirectoryServer::audit(const AccountHash& account) {
  auto targets = responders_for(account);
  std::vector<AuditVerdict> verdicts;
  if (targets.empty()) return verdicts;

  const crypto::Group& g = crypto::Group::by_id(cfg_.group);
  Bytes element(32);
  pmt::BuiltQuery built = [&] {
    std::lock_guard<std::mutex> lk(rng_mu_);
    rng_.fill(element.data(), element.size());
    return pmt::build_query(element, cfg_.params, g, rng_);
  }();
  QueryEnvelope env;
  env.account = account;
  env.params_version = cfg_.params_version;
  env.query = encode_query(built.query);

  // Unshuffled, source mapping retained: the point of an audit is to name the
  // responder that claims to hold a password nobody has ever used.
  for (const auto& [member, addr] : targets) {
    AuditVerdict v;
    v.member_id = member;
    try {
      Bytes payload = exchange_fanout(addr, env, cfg_.responder_timeout_ms);
      pmt::PmtResponse resp = decode_response(g, payload);
      v.flagged = pmt::interpret(built.sk, built.query.pk, resp);
    } catch (const std::exception&) {
      v.flagged = false;  // unreachable is not evidence of misbehavior
    }
    verdicts.push_back(std::move(v));
  }
  return verdicts;
}

bool DirectoryServer::escalation_gate(const AccountHash& account) {
  std::lock_guard<std::mutex> lk(mu_);
  auto it = escalation_.try_emplace(account, TokenBucket(cfg_.escalate_rate, cfg_.escalate_burst))
                .first;
  return it->second.try_consume(now_seconds());
}

// --- responder ---------------------------------------------------------------

ResponderServer::ResponderServer(ResponderConfig cfg) : cfg_(std::move(cfg)) {}

ResponderServer::~ResponderServer() { stop(); }

void ResponderServer::start(std::uint16_t port) {
  listener_ = std::make_unique<Listener>(Listener::bind_loopback(port));
  running_ = true;
  accept_thread_ = std::thread([this] { serve_loop(); });
}

void ResponderServer::stop() {
  if (!running_) return;
  running_ = false;
  if (accept_thread_.joinable()) accept_thread_.join();
  if (listener_) listener_->close();
  std::vector<std::thread> workers;
  {
    std::lock_guard<std::mutex> lk(threads_mu_);
    workers.swap(workers_);
  }
  for (std::thread& t : workers) {
    if (t.joinable()) t.join();
  }
}

std::uint16_t ResponderServer::port() const { return listener_ ? listener_->port() : 0; }

std::string ResponderServer::address() const {
  return "127.0.0.1:" + std::to_string(port());
}

void ResponderServer::serve_loop() {
  while (running_) {
    try {
      Socket s = listener_->accept(200);
      std::lock_guard<std::mutex> lk(threads_mu_);
      workers_.emplace_back(
          [this](Socket conn) { handle_connection(std::move(conn)); }, std::move(s));
    } catch (const TimeoutError&) {
      continue;
    } catch (const NetError&) {
      break;
    }
  }
}

ResponderServer::AccountEntry& ResponderServer::entry_for(const AccountHash& account) {
  std::lock_guard<std::mutex> lk(mu_);
  auto it = accounts_.find(account);
  if (it == accounts_.end()) {
    // Unknown accounts are served from an empty tracked set: the responder
    // answers every well-formed query, revealing nothing about which
    // accounts it actually tracks.
    detect::SuspiciousSetConfig sc;
    sc.filter = cfg_.params;
    const crypto::Group& g = crypto::Group::by_id(cfg_.group);
    std::lock_guard<std::mutex> rlk(rng_mu_);
    detect::SuspiciousSet set(hex_encode(account), sc, g.order(), rng_);
    it = accounts_
             .emplace(account, std::make_unique<AccountEntry>(std::move(set), cfg_.rate,
                                                              cfg_.burst))
             .first;
  }
  return *it->second;
}

void ResponderServer::put_account(const AccountHash& account, detect::SuspiciousSet set) {
  std::lock_guard<std::mutex> lk(mu_);
  accounts_.insert_or_assign(
      account, std::make_unique<AccountEntry>(std::move(set), cfg_.rate, cfg_.burst));
}

void ResponderServer::with_account(const AccountHash& account,
                                   const std::function<void(detect::SuspiciousSet&)>& fn) {
  AccountEntry& e = entry_for(account);
  std::lock_guard<std::mutex> lk(e.mu);
  fn(e.set);
}

namespace {

struct RateLimited {
  std::uint32_t retry_after_ms;
};

}  // namespace

Bytes ResponderServer::respond_for(const QueryEnvelope& env) {
  pmt::PmtQuery query = decode_query(env.query);
  if (query.pk.gid != cfg_.group) throw pmt::MalformedQuery("query group mismatch");
  AccountEntry& e = entry_for(env.account);
  std::lock_guard<std::mutex> lk(e.mu);
  double now = now_seconds();
  if (!e.bucket.try_consume(now)) {
    throw RateLimited{static_cast<std::uint32_t>(e.bucket.retry_after(now) * 1000.0) + 1};
  }
  std::lock_guard<std::mutex> rlk(rng_mu_);
  pmt::PmtResponse resp = pmt::respond(query, e.set.filter(), rng_);
  // Positions are re-randomized after every query so successive responses
  // cannot be correlated by slot.
  e.set.permute_filter(rng_);
  return encode_response(crypto::Group::by_id(cfg_.group), resp);
}

void ResponderServer::handle_connection(Socket s) {
  auto reply_error = [&](ErrorCode code, const std::string& msg, std::uint32_t retry_ms = 0) {
    ErrorPayload e{code, retry_ms, msg};
    send_frame(s, FrameType::error, encode_error(e), 2000);
  };
  while (running_) {
    Frame f;
    try {
      f = recv_frame(s, 500);
    } catch (const TimeoutError&) {
      continue;
    } catch (const NetError&) {
      return;
    }
    try {
      if (f.version != kProtocolVersion) {
        reply_error(ErrorCode::version_mismatch, "unsupported protocol version");
        continue;
      }
      if (f.type != FrameType::fanout) {
        reply_error(ErrorCode::malformed, "responder accepts only fan-out frames");
        continue;
      }
      QueryEnvelope env = decode_envelope(f.payload);
      if (env.params_version != cfg_.params_version) {
        reply_error(ErrorCode::params_mismatch, "filter parameter version mismatch");
        continue;
      }
      Bytes payload = respond_for(env);
      send_frame(s, FrameType::response, payload, 5000);
    } catch (const RateLimited& rl) {
      reply_error(ErrorCode::rate_limited, "per-account query budget exhausted",
                  rl.retry_after_ms);
    } catch (const pmt::MalformedQuery& e) {
      reply_error(ErrorCode::malformed, e.what());
    } catch (const ProtocolError& e) {
      reply_error(ErrorCode::malformed, e.what());
    } catch (const NetError&) {
      return;
    } catch (const std::exception& e) {
      reply_error(ErrorCode::internal, e.what());
    }
  }
}

// --- requester ---------------------------------------------------------------

RegisterStatus register_remote(const std::string& directory_host_port, const RegisterRequest& req,
                               int timeout_ms) {
  Socket s = Socket::connect_to(directory_host_port, timeout_ms);
  send_frame(s, FrameType::register_req, encode_register(req), timeout_ms);
  Frame reply = recv_frame(s, timeout_ms);
  if (reply.version != kProtocolVersion) throw NetError("directory protocol version mismatch");
  if (reply.type == FrameType::error) {
    ErrorPayload err = decode_error(reply.payload);
    throw NetError("directory refused registration: " + err.message);
  }
  if (reply.type != FrameType::register_req || reply.payload.size() != 1 ||
      reply.payload[0] > static_cast<std::uint8_t>(RegisterStatus::not_approved)) {
    throw ProtocolError("unexpected registration reply");
  }
  return static_cast<RegisterStatus>(reply.payload[0]);
}

PollOutcome poll_responders(const RequesterConfig& cfg, ByteView element, Rng& rng) {
  const crypto::Group& g = crypto::Group::by_id(cfg.group);
  pmt::BuiltQuery built = pmt::build_query(element, cfg.params, g, rng);

  QueryEnvelope env;
  env.account = cfg.account;
  env.params_version = cfg.params_version;
  env.member_id = cfg.member_id;
  env.query = encode_query(built.query);

  Socket s = cfg.proxy.empty() ? Socket::connect_to(cfg.directory, cfg.timeout_ms)
                               : socks5_connect(cfg.proxy, cfg.directory, cfg.timeout_ms);
  send_frame(s, FrameType::query, encode_envelope(env), cfg.timeout_ms);
  Frame reply = recv_frame(s, cfg.timeout_ms);
  if (reply.version != kProtocolVersion) throw ProtocolError("unsupported protocol version");
  if (reply.type == FrameType::error) {
    ErrorPayload e = decode_error(reply.payload);
    if (e.code == ErrorCode::no_responders) throw NoResponders(e.message);
    if (e.code == ErrorCode::challenge_required) throw ChallengeRequired(e.message);
    throw NetError("directory error: " + e.message);
  }
  if (reply.type != FrameType::batch) throw ProtocolError("expected a batch reply");

  BatchPayload batch = decode_batch(reply.payload);
  PollOutcome out;
  out.timeouts = batch.timeouts;
  out.votes.reserve(batch.responses.size());
  for (const Bytes& payload : batch.responses) {
    pmt::PmtResponse resp = decode_response(g, payload);
    out.votes.push_back(pmt::interpret(built.sk, built.query.pk, resp));
  }
  return out;
}

std::vector<bool> DirectoryChannel::membership_votes(ByteView element) {
  try {
    return poll_responders(cfg_, element, system_rng()).votes;
  } catch (const std::exception& e) {
    throw detect::DirectoryUnavailable(std::string("membership poll failed: ") + e.what());
  }
}

}  // namespace credstuff::net
