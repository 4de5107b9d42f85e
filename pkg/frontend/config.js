// Point the webchat at a chat service. Same-origin when empty; set an
// absolute origin when the service runs elsewhere, e.g.
//   globalThis.CONVREC_BASE_URL = "http://localhost:8080";
globalThis.CONVREC_BASE_URL = "";
