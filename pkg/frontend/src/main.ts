import { ApiClient } from "./api.js";
import { EditConsole } from "./console.js";
import { downscaleToResolution } from "./upload.js";

function apiBase(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get("api") ?? "";
}

window.addEventListener("DOMContentLoaded", () => {
  const root = document.getElementById("console");
  if (!root) throw new Error("missing #console root");
  const app = new EditConsole(root, new ApiClient(apiBase()));
  void app.syncModelInfo().then(() => {
    const input = root.querySelector<HTMLInputElement>(".fg-upload-input");
    input?.addEventListener("change", async () => {
      const file = input.files?.[0];
      const info = app.info;
      if (!file || !info) return;
      app.setAnchorImage(await downscaleToResolution(file, info.resolution));
    });
  });
});
