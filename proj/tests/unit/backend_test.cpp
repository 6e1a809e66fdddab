#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <thread>

#include "socialveil/http_backend.hpp"
#include "test_support.hpp"

using namespace socialveil;
using namespace testing_support;

namespace {

ChatRequest req(std::string text = "hello", double temp = 0.0) {
  return ChatRequest({{MessageRole::kUser, std::move(text)}}, temp, 64, "m");
}

// Local chat-completions stub. `respond` returns (status, body).
class StubServer {
 public:
  using Fn = std::function<std::pair<int, std::string>(const httplib::Request&)>;
  explicit StubServer(Fn fn) {
    server_.Post("/v1/chat/completions", [fn, this](const httplib::Request& q, httplib::Response& r) {
      ++hits;
      last_body = q.body;
      last_auth = q.get_header_value("Authorization");
      auto [status, body] = fn(q);
      r.status = status;
      r.set_content(body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  std::atomic<int> hits{0};
  std::string last_body;
  std::string last_auth;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::string ok_body(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}
      .dump();
}

HttpBackend::Options options(const std::string& url, std::vector<double>* sleeps) {
  HttpBackend::Options o;
  o.base_url = url;
  o.api_key = "k";
  o.model_id = "stub-model";
  o.max_retries = 3;
  o.retry_backoff_s = 0.5;
  o.request_timeout_s = 5;
  o.sleep = [sleeps](double s) { sleeps->push_back(s); };
  return o;
}

}  // namespace

TEST(ChatRequest, Validation) {
  EXPECT_THROW(ChatRequest({}, 0.0, 10, "m"), InputError);
  EXPECT_THROW(req("x", 2.5), InputError);
  EXPECT_THROW(ChatRequest({{MessageRole::kUser, "x"}}, 0.0, 0, "m"), InputError);
}

TEST(ChatRequest, HashCoversSamplingButNotTag) {
  ChatRequest a = req();
  EXPECT_EQ(a.hash(), req().hash());
  EXPECT_EQ(a.hash(), a.with_tag({"agent", "e", "partner", 3}).hash());
  EXPECT_NE(a.hash(), a.with_sample_index(1).hash());
  EXPECT_NE(a.hash(), req("hello", 0.5).hash());
  EXPECT_NE(a.hash(), req("hello!").hash());
  EXPECT_EQ(a.hash().size(), 64u);
}

TEST(ActionParsing, AcceptsEmbeddedJson) {
  AgentAction a = parse_action(R"(Sure: {"action_type": "speak", "argument": "Hi {there}"} ok)");
  EXPECT_EQ(a.action_type, ActionType::kSpeak);
  EXPECT_EQ(a.argument, "Hi {there}");
  EXPECT_EQ(parse_action(R"({"action_type":"leave","argument":null})").action_type,
            ActionType::kLeave);
  EXPECT_EQ(parse_action(R"({"action_type":"none","argument":""})").action_type, ActionType::kNone);
}

TEST(ActionParsing, RejectsMalformed) {
  for (const char* bad : {"no json here", R"({"action_type":"speak"})",
                          R"({"action_type":"yell","argument":"x"})",
                          R"({"action_type":"speak","argument":""})",
                          R"({"action_type":3,"argument":"x"})", R"({"action_type":"speak")"}) {
    try {
      parse_action(bad);
      ADD_FAILURE() << bad;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.raw(), bad);
    }
  }
}

TEST(ActionParsing, RenderRoundTrips) {
  for (ActionType t : kAllActionTypes) {
    AgentAction a{t, t == ActionType::kSpeak ? "words \"quoted\"" : "x"};
    EXPECT_EQ(parse_action(render_action(a)), a);
  }
}

TEST(Scripted, RulesMatchInOrder) {
  auto rules = parse_script(Json::parse(R"([
    {"role": "barrier", "turn": 1, "responses": ["first", "second"]},
    {"contains": "magic", "response": "found"},
    {"response": "default"}])"));
  ScriptedBackend b("s", rules);
  ChatRequest r = req("plain").with_tag({"agent", "e", "barrier", 1});
  EXPECT_EQ(b.complete(r).text, "first");
  EXPECT_EQ(b.complete(r.with_sample_index(5)).text, "second");
  EXPECT_EQ(b.complete(req("a magic word")).text, "found");
  EXPECT_EQ(b.complete(req("other")).text, "default");
}

TEST(Scripted, ShorthandAndMisses) {
  ScriptedBackend b("s", parse_script(Json::parse(R"({"*": "any", "key": "hit"})")));
  EXPECT_EQ(b.complete(req("the key")).text, "hit");
  EXPECT_EQ(b.complete(req("x")).text, "any");
  ScriptedBackend empty("s", parse_script(Json::array()));
  EXPECT_THROW(empty.complete(req()), TransportError);
}

TEST(Replay, CachingRecordsAndReplays) {
  TempDir dir;
  auto file = dir.path() / "rec.ndjson";
  int calls = 0;
  auto inner = std::make_shared<RecordingBackend>([&calls](const ChatRequest& r) {
    ++calls;
    return "reply to " + r.messages()[0].content;
  });
  {
    CachingBackend cache(inner, file);
    EXPECT_EQ(cache.complete(req("a")).text, "reply to a");
    EXPECT_EQ(cache.complete(req("a")).text, "reply to a");
    EXPECT_EQ(cache.complete(req("b")).text, "reply to b");
    EXPECT_EQ(cache.hits(), 1u);
    EXPECT_EQ(cache.misses(), 2u);
  }
  EXPECT_EQ(calls, 2);
  CachingBackend reloaded(inner, file);
  EXPECT_EQ(reloaded.complete(req("b")).text, "reply to b");
  EXPECT_EQ(calls, 2);

  ReplayBackend replay("m", load_replay_file(file));
  EXPECT_EQ(replay.complete(req("a")).text, "reply to a");
  EXPECT_THROW(replay.complete(req("c")), TransportError);
}

TEST(BackendConfig, ParseAndBuild) {
  Json j = Json::parse(R"({"kind": "scripted", "model_id": "x", "script": {"*": "ok"}})");
  BackendConfig c = parse_backend_config(j);
  EXPECT_EQ(make_backend(c)->complete(req()).text, "ok");
  EXPECT_THROW(parse_backend_config(Json::parse(R"({"kind":"carrier-pigeon"})")), InputError);
  EXPECT_THROW(make_backend(parse_backend_config(Json::parse(R"({"kind":"replay"})"))), InputError);
  BackendConfig http = parse_backend_config(Json::parse(
      R"({"kind":"http_openai_compatible","base_url":"http://127.0.0.1:1/v1","api_key_env":"SOCIALVEIL_TEST_UNSET_KEY"})"));
  EXPECT_THROW(make_backend(http), InputError);
}

TEST(Backoff, Schedule) {
  EXPECT_EQ(backoff_schedule(0.5, 4), (std::vector<double>{0.5, 1.0, 2.0, 4.0}));
  EXPECT_TRUE(backoff_schedule(1.0, 0).empty());
}

TEST(TokenBudgetTest, BlocksUntilWindowSlides) {
  TokenBudget budget(100, std::chrono::milliseconds(150));
  auto start = std::chrono::steady_clock::now();
  budget.acquire(80);
  budget.acquire(80);
  double waited = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  EXPECT_GE(waited, 100.0);
}

TEST(Http, RetriesOn429ThenSucceeds) {
  std::atomic<int> n{0};
  StubServer stub([&n](const httplib::Request&) -> std::pair<int, std::string> {
    if (n++ < 2) return {429, R"({"error":"slow down"})"};
    return {200, ok_body("done")};
  });
  std::vector<double> sleeps;
  HttpBackend b(options(stub.url(), &sleeps));
  Completion c = b.complete(req("ping", 0.3));
  EXPECT_EQ(c.text, "done");
  EXPECT_EQ(c.transport_retries, 2);
  EXPECT_EQ(stub.hits.load(), 3);
  EXPECT_EQ(sleeps, (std::vector<double>{0.5, 1.0}));
  ASSERT_EQ(c.attempt_log.size(), 3u);
  EXPECT_EQ(c.attempt_log[0], "attempt 0: HTTP 429");
  auto body = nlohmann::json::parse(stub.last_body);
  EXPECT_EQ(body["model"], "m");
  EXPECT_EQ(body["temperature"], 0.3);
  EXPECT_EQ(body["max_tokens"], 64);
  EXPECT_EQ(body["messages"][0]["content"], "ping");
  EXPECT_EQ(stub.last_auth, "Bearer k");
}

TEST(Http, ClientErrorIsNotRetried) {
  StubServer stub([](const httplib::Request&) { return std::pair<int, std::string>{400, "{}"}; });
  std::vector<double> sleeps;
  HttpBackend b(options(stub.url(), &sleeps));
  try {
    b.complete(req());
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_EQ(e.attempt_log().size(), 1u);
  }
  EXPECT_EQ(stub.hits.load(), 1);
}

TEST(Http, ExhaustsRetriesOn5xx) {
  StubServer stub([](const httplib::Request&) { return std::pair<int, std::string>{503, "{}"}; });
  std::vector<double> sleeps;
  HttpBackend b(options(stub.url(), &sleeps));
  try {
    b.complete(req());
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_EQ(e.attempt_log().size(), 4u);
  }
  EXPECT_EQ(sleeps.size(), 3u);
}

TEST(Http, MalformedBody) {
  StubServer stub([](const httplib::Request&) { return std::pair<int, std::string>{200, "[]"}; });
  std::vector<double> sleeps;
  HttpBackend b(options(stub.url(), &sleeps));
  EXPECT_THROW(b.complete(req()), TransportError);
}
