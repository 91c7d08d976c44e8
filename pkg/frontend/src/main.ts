import { startApp } from "./app.js";

const rootEl = document.getElementById("app");
if (rootEl) startApp(rootEl);
