// Page-by-page reader for the child. Interactions are always skippable
// (low-pressure rule): skipping navigates without logging an event, while a
// completed interaction emits exactly one InteractionEvent for its page and
// then advances. After a choice is made, that page always follows the chosen
// branch; skipping a choice follows the page's default next pointer.

import type { ApiClient } from "./api.js";
import type { EventQueue } from "./eventQueue.js";
import type { EpisodeView, InteractionKind, Page } from "./types.js";

export interface ReaderState {
  sessionId: string;
  currentPageId: string;
  visited: string[];
  selectedBranches: Record<string, string>;
  audio: "idle" | "playing";
  finished: boolean;
}

export interface VoiceRecorder {
  start(): Promise<void>;
  stop(): Promise<{ data: Blob | ArrayBuffer; mediaType: string }>;
}

export type RecorderFactory = () => VoiceRecorder | null;

export interface ReaderOptions {
  view: EpisodeView;
  sessionId: string;
  client: ApiClient;
  queue: EventQueue;
  onFinishReading?: () => void;
  recorderFactory?: RecorderFactory;
  /** Shown on the terminal page as the little take-home task. */
  realWorldTask?: string;
}

const KIND_BY_TYPE: Record<string, InteractionKind> = {
  tap: "tap",
  drag: "drag",
  mimic: "mimic_done",
  choice: "choice_selected",
  record_voice: "voice_recorded",
};

const ACTION_LABELS: Record<string, string> = {
  tap: "点一点",
  drag: "拖一拖",
  mimic: "学一学",
  record_voice: "录下来",
};

export class Reader {
  readonly state: ReaderState;
  private pagesById = new Map<string, Page>();
  private emitted = new Set<string>();
  private root: HTMLElement | null = null;
  private recording: VoiceRecorder | null = null;

  constructor(private options: ReaderOptions) {
    const pages = options.view.episode.pages;
    if (pages.length === 0) {
      throw new Error("episode has no pages");
    }
    for (const page of pages) this.pagesById.set(page.page_id, page);
    const first = pages[0]!;
    this.state = {
      sessionId: options.sessionId,
      currentPageId: first.page_id,
      visited: [first.page_id],
      selectedBranches: {},
      audio: "idle",
      finished: false,
    };
  }

  page(): Page {
    const page = this.pagesById.get(this.state.currentPageId);
    if (!page) throw new Error(`unknown page ${this.state.currentPageId}`);
    return page;
  }

  isTerminal(page: Page = this.page()): boolean {
    return page.next_page_id === null && page.branch_choices.length === 0;
  }

  /** Emit the page's event (once) and navigate; returns false when already done. */
  completeInteraction(choiceId?: string): boolean {
    const page = this.page();
    const interaction = page.interaction;
    if (!interaction || interaction.type === "none" || !interaction.event_key) {
      return false;
    }
    if (interaction.type === "record_voice") return false; // completeVoice only
    if (this.emitted.has(page.page_id)) return false;
    if (interaction.type === "choice") {
      const valid = page.branch_choices.some((bc) => bc.choice_id === choiceId);
      if (!choiceId || !valid) return false;
      this.state.selectedBranches[page.page_id] = choiceId;
    }
    this.emitted.add(page.page_id);
    this.options.queue.enqueue(this.state.sessionId, {
      page_id: page.page_id,
      event_key: interaction.event_key,
      kind: KIND_BY_TYPE[interaction.type] ?? "tap",
      choice_branch: interaction.type === "choice" ? choiceId : null,
      audio_asset: null,
    });
    this.advance();
    return true;
  }

  /** Voice pages attach the uploaded asset before emitting. */
  async completeVoice(): Promise<boolean> {
    const page = this.page();
    const interaction = page.interaction;
    if (!interaction || interaction.type !== "record_voice" ||
        !interaction.event_key || this.emitted.has(page.page_id)) {
      return false;
    }
    let assetId: string | null = null;
    if (this.recording) {
      try {
        const { data, mediaType } = await this.recording.stop();
        assetId = await this.options.client.uploadAsset(data, mediaType);
      } catch {
        assetId = null; // recording is best-effort, never blocks the story
      }
      this.recording = null;
    }
    this.emitted.add(page.page_id);
    this.options.queue.enqueue(this.state.sessionId, {
      page_id: page.page_id,
      event_key: interaction.event_key,
      kind: "voice_recorded",
      choice_branch: null,
      audio_asset: assetId,
    });
    this.advance();
    return true;
  }

  /** Navigate without logging anything (the skip path). */
  skip(): boolean {
    return this.advance();
  }

  advance(): boolean {
    const page = this.page();
    let target: string | null = null;
    const chosen = this.state.selectedBranches[page.page_id];
    if (chosen) {
      const branch = page.branch_choices.find((bc) => bc.choice_id === chosen);
      target = branch ? branch.next_page_id : page.next_page_id;
    } else {
      target = page.next_page_id;
    }
    if (target === null || !this.pagesById.has(target)) {
      return false;
    }
    this.state.currentPageId = target;
    if (!this.state.visited.includes(target)) {
      this.state.visited.push(target);
    }
    this.rerender();
    return true;
  }

  finishReading(): void {
    if (this.state.finished) return;
    this.state.finished = true;
    this.options.onFinishReading?.();
    this.rerender();
  }

  // ---- rendering -------------------------------------------------------------

  render(root: HTMLElement): void {
    this.root = root;
    this.rerender();
  }

  private rerender(): void {
    if (!this.root) return;
    const page = this.page();
    const doc = this.root.ownerDocument;
    this.root.textContent = "";

    const container = doc.createElement("section");
    container.className = "reader-page";
    container.dataset["pageId"] = page.page_id;

    const header = doc.createElement("div");
    header.className = "reader-progress";
    header.textContent = `第 ${page.page_no} 页`;
    container.appendChild(header);

    container.appendChild(this.renderImage(doc, page));
    container.appendChild(this.renderAudioButton(doc, page));

    const text = doc.createElement("p");
    text.className = "reader-text";
    text.textContent = page.page_text_cn;
    container.appendChild(text);

    const interactionBox = this.renderInteraction(doc, page);
    if (interactionBox) container.appendChild(interactionBox);

    container.appendChild(this.renderNav(doc, page));
    this.root.appendChild(container);
  }

  private renderImage(doc: Document, page: Page): HTMLElement {
    const assetId = this.options.view.page_images[page.page_id];
    if (!assetId) {
      const placeholder = doc.createElement("div");
      placeholder.className = "reader-image placeholder";
      placeholder.textContent = "🖼";
      return placeholder;
    }
    const img = doc.createElement("img");
    img.className = "reader-image";
    img.src = this.options.client.assetUrl(assetId);
    img.alt = `第 ${page.page_no} 页插图`;
    return img;
  }

  private renderAudioButton(doc: Document, page: Page): HTMLElement {
    const wrap = doc.createElement("div");
    wrap.className = "reader-audio";
    const assetId = this.options.view.page_audio[page.page_id];
    if (!assetId) return wrap;
    const button = doc.createElement("button");
    button.className = "audio-play";
    button.textContent = "▶ 听一听";
    button.addEventListener("click", () => {
      this.state.audio = "playing";
      try {
        const audio = new (doc.defaultView as any).Audio(
          this.options.client.assetUrl(assetId),
        );
        audio.addEventListener("ended", () => (this.state.audio = "idle"));
        void audio.play().catch(() => (this.state.audio = "idle"));
      } catch {
        this.state.audio = "idle";
      }
    });
    wrap.appendChild(button);
    return wrap;
  }

  private renderInteraction(doc: Document, page: Page): HTMLElement | null {
    const interaction = page.interaction;
    if (!interaction || interaction.type === "none") return null;
    const box = doc.createElement("div");
    box.className = `interaction interaction-${interaction.type}`;
    const prompt = doc.createElement("p");
    prompt.className = "interaction-instruction";
    prompt.textContent = interaction.instruction;
    box.appendChild(prompt);
    const done = this.emitted.has(page.page_id);

    if (interaction.type === "choice") {
      for (const branch of page.branch_choices) {
        const button = doc.createElement("button");
        button.className = "choice-button";
        button.textContent = branch.label_cn;
        button.disabled = done;
        button.addEventListener("click", () =>
          this.completeInteraction(branch.choice_id),
        );
        box.appendChild(button);
      }
    } else if (interaction.type === "record_voice") {
      const start = doc.createElement("button");
      start.className = "voice-start";
      const factory = this.options.recorderFactory;
      const recorder = factory ? factory() : null;
      if (recorder) {
        start.textContent = "● 开始录音";
        start.disabled = done;
        start.addEventListener("click", () => {
          this.recording = recorder;
          void recorder.start();
          start.textContent = "…录音中";
        });
        const stop = doc.createElement("button");
        stop.className = "voice-stop";
        stop.textContent = "■ 说完了";
        stop.disabled = done;
        stop.addEventListener("click", () => void this.completeVoice());
        box.appendChild(start);
        box.appendChild(stop);
      } else {
        const note = doc.createElement("p");
        note.className = "voice-unavailable";
        note.textContent = "这台设备不能录音，点下面的按钮继续";
        const ok = doc.createElement("button");
        ok.className = "voice-skip-done";
        ok.textContent = "说给爸爸妈妈听了";
        ok.disabled = done;
        ok.addEventListener("click", () => void this.completeVoice());
        box.appendChild(note);
        box.appendChild(ok);
      }
    } else {
      const act = doc.createElement("button");
      act.className = `interaction-action action-${interaction.type}`;
      act.textContent = ACTION_LABELS[interaction.type] ?? "试一试";
      act.disabled = done;
      act.addEventListener("click", () => this.completeInteraction());
      box.appendChild(act);
    }

    if (interaction.ext.encouragement) {
      const cheer = doc.createElement("p");
      cheer.className = "interaction-encouragement";
      cheer.textContent = interaction.ext.encouragement;
      box.appendChild(cheer);
    }
    return box;
  }

  private renderNav(doc: Document, page: Page): HTMLElement {
    const nav = doc.createElement("div");
    nav.className = "reader-nav";
    if (this.isTerminal(page)) {
      const task = doc.createElement("p");
      task.className = "real-world-task";
      task.textContent =
        this.options.realWorldTask ??
        `小任务：下次见到${this.options.view.episode.target_food}，先看一看、闻一闻。`;
      nav.appendChild(task);
      const finish = doc.createElement("button");
      finish.className = "finish-reading";
      finish.textContent = this.state.finished ? "已读完 ✓" : "读完啦";
      finish.disabled = this.state.finished;
      finish.addEventListener("click", () => this.finishReading());
      nav.appendChild(finish);
      return nav;
    }
    const next = doc.createElement("button");
    const interactive =
      page.interaction && page.interaction.type !== "none" &&
      !this.emitted.has(page.page_id);
    next.className = interactive ? "nav-skip" : "nav-next";
    next.textContent = interactive ? "先跳过" : "下一页";
    next.addEventListener("click", () => this.skip());
    nav.appendChild(next);
    return nav;
  }
}
