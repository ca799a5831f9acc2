import { RetentionClient } from "./api.js";
import { mount } from "./app.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("service") ?? "http://127.0.0.1:8000";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app container");

mount(document, root, new RetentionClient(baseUrl)).catch((err) => {
  root.textContent = `cannot reach service at ${baseUrl}: ${String(err)}`;
});
