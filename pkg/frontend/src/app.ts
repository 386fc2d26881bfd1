// Hash-routed shell wiring the parent console and the child reader to the
// backend. Keeps no state beyond the current child id (localStorage).

import { ApiClient } from "./api.js";
import { AvatarBuilder } from "./avatarBuilder.js";
import { EventQueue } from "./eventQueue.js";
import { PostMealForm } from "./postMealForm.js";
import { Reader } from "./reader.js";
import { ReviewConsole } from "./review.js";

const MODES: Array<[string, string]> = [
  ["realistic_everyday", "日常小事"],
  ["light_fantasy_familiar", "温柔幻想"],
  ["hybrid_expository_narrative", "问问看看"],
  ["journey_discovery_framework", "出发探险"],
];

export class App {
  private client: ApiClient;
  private queue: EventQueue;

  constructor(
    private root: HTMLElement,
    baseUrl = "",
    token?: string,
  ) {
    this.client = new ApiClient({ baseUrl, token });
    this.queue = new EventQueue(this.client, (err) =>
      console.warn("event queued for retry:", err),
    );
    const win = root.ownerDocument.defaultView;
    win?.addEventListener("hashchange", () => void this.route());
  }

  private get childId(): string | null {
    const win = this.root.ownerDocument.defaultView;
    return win?.localStorage.getItem("storybites.child") ?? null;
  }

  private setChildId(id: string): void {
    const win = this.root.ownerDocument.defaultView;
    win?.localStorage.setItem("storybites.child", id);
  }

  async route(): Promise<void> {
    const win = this.root.ownerDocument.defaultView;
    const hash = win?.location.hash ?? "";
    const [, view = "", arg = ""] = hash.replace(/^#\//, "").split("/").length
      ? ["", ...hash.replace(/^#\//, "").split("/")]
      : ["", "", ""];
    try {
      if (view === "review" && arg) return await this.showReview(arg);
      if (view === "read" && arg) return await this.showReader(arg, "episode");
      if (view === "ending" && arg) return await this.showReader(arg, "ending");
      if (view === "post-meal" && arg) return await this.showPostMeal(arg);
      return await this.showHome();
    } catch (err) {
      this.showError(err);
    }
  }

  private clear(): HTMLElement {
    this.root.textContent = "";
    return this.root;
  }

  private showError(err: unknown): void {
    const doc = this.root.ownerDocument;
    const box = doc.createElement("p");
    box.className = "app-error";
    box.textContent = String(err);
    this.clear().appendChild(box);
  }

  private async showHome(): Promise<void> {
    const doc = this.root.ownerDocument;
    const root = this.clear();
    const title = doc.createElement("h1");
    title.textContent = "一起来讲今天的食物故事";
    root.appendChild(title);

    const avatarMount = doc.createElement("div");
    root.appendChild(avatarMount);
    const builder = new AvatarBuilder({
      client: this.client,
      onCreated: (avatar) => this.setChildId(avatar.avatar_id),
    });
    builder.render(avatarMount);

    const startBox = doc.createElement("div");
    startBox.className = "start-session";
    const foodInput = doc.createElement("input");
    foodInput.className = "food-input";
    foodInput.placeholder = "这次想熟悉哪种食物？";
    const modeSelect = doc.createElement("select");
    modeSelect.className = "mode-select";
    for (const [value, label] of MODES) {
      const option = doc.createElement("option");
      option.value = value;
      option.textContent = label;
      modeSelect.appendChild(option);
    }
    const start = doc.createElement("button");
    start.className = "start-button";
    start.textContent = "生成这一集";
    start.addEventListener("click", () => void startFlow());
    startBox.appendChild(foodInput);
    startBox.appendChild(modeSelect);
    startBox.appendChild(start);
    root.appendChild(startBox);

    const status = doc.createElement("p");
    status.className = "start-status";
    root.appendChild(status);

    const startFlow = async () => {
      const child = this.childId;
      if (!child) {
        status.textContent = "先创建一个小主角";
        return;
      }
      if (!foodInput.value.trim()) {
        status.textContent = "先填上这次的目标食物";
        return;
      }
      try {
        status.textContent = "正在准备故事世界…";
        const library = await this.client.library(child);
        const hasFramework = library.sessions.length > 0;
        if (!hasFramework) {
          const fw = await this.client.createFramework({
            child_id: child,
            theme: foodInput.value.trim(),
            mode: modeSelect.value,
          });
          await this.client.waitForJob(fw.job_id);
        }
        const session = await this.client.createSession(
          child,
          foodInput.value.trim(),
        );
        status.textContent = "正在写这一集…";
        const gen = await this.client.generate(session.session_id);
        await this.client.waitForJob(gen.job_id);
        const win = doc.defaultView;
        if (win) win.location.hash = `#/review/${session.session_id}`;
        await this.route();
      } catch (err) {
        status.textContent = String(err);
      }
    };
  }

  private async showReview(sessionId: string): Promise<void> {
    const mount = this.clear();
    const doc = mount.ownerDocument;
    const console_ = new ReviewConsole({
      client: this.client,
      sessionId,
      onApproved: () => {
        const win = doc.defaultView;
        if (win) win.location.hash = `#/read/${sessionId}`;
        void this.route();
      },
    });
    console_.render(mount);
    await console_.load();
  }

  private async showReader(
    sessionId: string,
    which: "episode" | "ending",
  ): Promise<void> {
    const view =
      which === "episode"
        ? await this.client.getEpisode(sessionId)
        : await this.client.getEnding(sessionId);
    const mount = this.clear();
    const doc = mount.ownerDocument;
    const reader = new Reader({
      view,
      sessionId,
      client: this.client,
      queue: this.queue,
      onFinishReading: () => {
        if (which === "episode") {
          void this.client.readingFinished(sessionId).then(() => {
            const win = doc.defaultView;
            if (win) win.location.hash = `#/post-meal/${sessionId}`;
            void this.route();
          });
        }
      },
    });
    reader.render(mount);
  }

  private async showPostMeal(sessionId: string): Promise<void> {
    const session = await this.client.getSession(sessionId);
    const mount = this.clear();
    const form = new PostMealForm({
      client: this.client,
      sessionId,
      targetFood: session.target_food,
    });
    form.render(mount);
  }
}

export function mount(root: HTMLElement, baseUrl = "", token?: string): App {
  const app = new App(root, baseUrl, token);
  void app.route();
  return app;
}
