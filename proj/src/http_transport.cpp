#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "sfa/backends.hpp"
#include "sfa/error.hpp"

namespace sfa {

namespace {

class HttplibTransport final : public HttpTransport {
public:
    HttpResponse post(const std::string& url, const Headers& headers, const std::string& body,
                      double timeout_s) override {
        // Split "scheme://host[:port]/path" into origin and path.
        const auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) throw Error(ErrorKind::configuration, "malformed URL " + url);
        const auto path_start = url.find('/', scheme_end + 3);
        const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
        const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

        httplib::Client client(origin);
        const auto secs = static_cast<time_t>(timeout_s);
        const auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
        client.set_connection_timeout(secs, usecs);
        client.set_read_timeout(secs, usecs);
        client.set_write_timeout(secs, usecs);

        httplib::Headers h;
        std::string content_type = "application/json";
        for (const auto& [k, v] : headers) {
            if (k == "Content-Type") {
                content_type = v;
            } else {
                h.emplace(k, v);
            }
        }
        auto res = client.Post(path, h, body, content_type);
        if (!res) return HttpResponse{0, httplib::to_string(res.error())};
        return HttpResponse{res->status, res->body};
    }
};

}  // namespace

std::shared_ptr<HttpTransport> make_http_transport() { return std::make_shared<HttplibTransport>(); }

}  // namespace sfa
