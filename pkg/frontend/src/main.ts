import { HttpServiceClient } from "./api.js";
import { Session } from "./state.js";
import { bindUi } from "./ui.js";

// same-origin by default; set window.SERVICE_URL before loading to override
declare global {
  interface Window {
    SERVICE_URL?: string;
  }
}

const client = new HttpServiceClient(window.SERVICE_URL ?? "");
const session = new Session(client);
bindUi(session, client);
