// Post-meal record form. Scales stay inside their declared ranges by
// construction (sliders and anchored pickers); a paranoid validate() still
// runs before submit so nothing out of range can ever leave the client.
// After submitting it polls the session, then shows the feedback text, the
// avatar's expression, and the door to the story ending.

import { ApiClient, ApiError } from "./api.js";
import type { FeedbackView, PostMealInput, Session } from "./types.js";

export const TRY_LEVEL_ANCHORS: Record<number, string> = {
  1: "完全拒绝，不让它出现在桌上",
  2: "允许它放在桌上或盘子里，但不碰",
  3: "看了看，或者闻了闻",
  4: "用手碰了碰、摆弄了它",
  5: "送到嘴边，或者舔了舔",
  6: "咬了嚼了，但没有咽下去",
  7: "吞下了至少一口",
};

export const SPECIAL_CIRCUMSTANCES: Array<[string, string]> = [
  ["illness", "生病了"],
  ["poor_sleep", "没睡好"],
  ["outside_home", "在外面吃饭"],
  ["visitors", "家里来客人"],
  ["time_pressure", "时间很赶"],
  ["other", "其他情况"],
];

const SCALE_FIELDS: Array<[keyof PostMealInput, string]> = [
  ["baseline_try", "平时对这个食物的接受度"],
  ["try_level", "今天最高尝试到哪一步"],
  ["intake", "实际吃了多少"],
  ["resistance", "抗拒有多强"],
  ["emotion", "吃饭时的心情"],
  ["parent_pressure", "家长感觉压力多大"],
  ["helpfulness", "这次的故事帮了多少忙"],
];

const AVATAR_FACES: Record<string, string> = {
  happy: "😊",
  neutral: "🙂",
  "sad-but-hopeful": "🥺",
};

export interface PostMealFormOptions {
  client: ApiClient;
  sessionId: string;
  targetFood: string;
  onEndingReady?: (session: Session) => void;
}

export class PostMealForm {
  readonly values: PostMealInput;
  private root: HTMLElement | null = null;
  private error = "";
  private submitted = false;
  private feedback: FeedbackView | null = null;
  private endingReady = false;

  constructor(private options: PostMealFormOptions) {
    this.values = {
      target_food: options.targetFood,
      baseline_try: 2,
      try_level: 4,
      intake: 3,
      resistance: 3,
      emotion: 4,
      parent_pressure: 3,
      helpfulness: 4,
      self_rating: 5,
      self_description: "",
      special_circumstances: [],
      task_completed: false,
    };
  }

  get isSubmitted(): boolean {
    return this.submitted;
  }

  setScale(field: keyof PostMealInput, value: number): void {
    (this.values as unknown as Record<string, unknown>)[field] = value;
  }

  /** All range errors, client-side; empty when submittable. */
  validate(): string[] {
    const problems: string[] = [];
    for (const [field] of SCALE_FIELDS) {
      const value = this.values[field] as number;
      if (!Number.isInteger(value) || value < 1 || value > 7) {
        problems.push(`${String(field)} 需要在 1-7 之间`);
      }
    }
    const rating = this.values.self_rating;
    if (!Number.isInteger(rating) || rating < 1 || rating > 10) {
      problems.push("self_rating 需要在 1-10 之间");
    }
    return problems;
  }

  async submit(): Promise<boolean> {
    if (this.submitted) {
      this.error = "这一餐已经记录过啦";
      this.rerender();
      return false;
    }
    const problems = this.validate();
    if (problems.length > 0) {
      this.error = problems.join("；");
      this.rerender();
      return false;
    }
    try {
      const { job_id } = await this.options.client.postMeal(
        this.options.sessionId,
        this.values,
      );
      this.submitted = true;
      this.error = "";
      this.rerender();
      await this.options.client.waitForJob(job_id);
      this.feedback = await this.options.client.getFeedback(
        this.options.sessionId,
      );
      const session = await this.options.client.getSession(
        this.options.sessionId,
      );
      this.endingReady = session.state === "EndingReady";
      if (this.endingReady) this.options.onEndingReady?.(session);
      this.rerender();
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // Already recorded (or not ready): guidance, not a crash.
        this.error = `现在不能提交：${err.detail}`;
      } else {
        this.error = err instanceof ApiError ? err.detail : String(err);
      }
      this.rerender();
      return false;
    }
  }

  render(root: HTMLElement): void {
    this.root = root;
    this.rerender();
  }

  private scaleRow(doc: Document, field: keyof PostMealInput,
                   label: string): HTMLElement {
    const row = doc.createElement("div");
    row.className = `scale-row scale-${String(field)}`;
    const caption = doc.createElement("label");
    caption.textContent = label;
    row.appendChild(caption);
    const group = doc.createElement("div");
    group.className = "scale-buttons";
    for (let v = 1; v <= 7; v++) {
      const button = doc.createElement("button");
      button.type = "button";
      button.textContent = String(v);
      button.className = this.values[field] === v ? "scale selected" : "scale";
      if (field === "try_level") {
        button.title = TRY_LEVEL_ANCHORS[v] ?? "";
      }
      button.addEventListener("click", () => {
        this.setScale(field, v);
        this.rerender();
      });
      group.appendChild(button);
    }
    row.appendChild(group);
    if (field === "try_level") {
      const anchor = doc.createElement("p");
      anchor.className = "try-anchor";
      anchor.textContent =
        `${this.values.try_level} = ${TRY_LEVEL_ANCHORS[this.values.try_level]}`;
      row.appendChild(anchor);
    }
    return row;
  }

  private rerender(): void {
    if (!this.root) return;
    const doc = this.root.ownerDocument;
    this.root.textContent = "";

    if (this.feedback) {
      this.root.appendChild(this.renderFeedback(doc));
      return;
    }

    const form = doc.createElement("form");
    form.className = "post-meal-form";
    form.addEventListener("submit", (e) => {
      e.preventDefault();
      void this.submit();
    });

    const title = doc.createElement("h2");
    title.textContent = `这一餐的${this.options.targetFood}怎么样？`;
    form.appendChild(title);

    for (const [field, label] of SCALE_FIELDS) {
      form.appendChild(this.scaleRow(doc, field, label));
    }

    const ratingRow = doc.createElement("div");
    ratingRow.className = "self-rating-row";
    const ratingLabel = doc.createElement("label");
    ratingLabel.textContent = `我今天表现得怎么样（${this.values.self_rating}/10）`;
    const slider = doc.createElement("input");
    slider.type = "range";
    slider.min = "1";
    slider.max = "10";
    slider.step = "1";
    slider.className = "self-rating-slider";
    slider.value = String(this.values.self_rating);
    slider.addEventListener("input", () => {
      this.values.self_rating = Number(slider.value);
      ratingLabel.textContent = `我今天表现得怎么样（${slider.value}/10）`;
    });
    ratingRow.appendChild(ratingLabel);
    ratingRow.appendChild(slider);
    form.appendChild(ratingRow);

    const description = doc.createElement("textarea");
    description.className = "self-description";
    description.placeholder = "用一两句话说说发生了什么";
    description.value = this.values.self_description;
    description.addEventListener("input", () => {
      this.values.self_description = description.value;
    });
    form.appendChild(description);

    const flags = doc.createElement("div");
    flags.className = "special-circumstances";
    for (const [value, label] of SPECIAL_CIRCUMSTANCES) {
      const wrap = doc.createElement("label");
      const checkbox = doc.createElement("input");
      checkbox.type = "checkbox";
      checkbox.value = value;
      checkbox.checked = this.values.special_circumstances.includes(value);
      checkbox.addEventListener("change", () => {
        const list = this.values.special_circumstances.filter((v) => v !== value);
        if (checkbox.checked) list.push(value);
        this.values.special_circumstances = list;
      });
      wrap.appendChild(checkbox);
      wrap.appendChild(doc.createTextNode(label));
      flags.appendChild(wrap);
    }
    form.appendChild(flags);

    const task = doc.createElement("label");
    task.className = "task-completed";
    const taskBox = doc.createElement("input");
    taskBox.type = "checkbox";
    taskBox.checked = this.values.task_completed;
    taskBox.addEventListener("change", () => {
      this.values.task_completed = taskBox.checked;
    });
    task.appendChild(taskBox);
    task.appendChild(doc.createTextNode("上次故事里的小任务完成啦"));
    form.appendChild(task);

    if (this.error) {
      const error = doc.createElement("p");
      error.className = "form-error";
      error.textContent = this.error;
      form.appendChild(error);
    }

    const submit = doc.createElement("button");
    submit.type = "submit";
    submit.className = "post-meal-submit";
    submit.disabled = this.submitted;
    submit.textContent = this.submitted ? "已记录，正在生成…" : "记录这一餐";
    form.appendChild(submit);

    this.root.appendChild(form);
  }

  private renderFeedback(doc: Document): HTMLElement {
    const box = doc.createElement("section");
    box.className = "feedback-view";
    const fb = this.feedback!;
    const face = doc.createElement("div");
    face.className = `avatar-face avatar-${fb.avatar_state}`;
    face.textContent = AVATAR_FACES[fb.avatar_state] ?? "🙂";
    box.appendChild(face);
    const text = doc.createElement("p");
    text.className = `feedback-text feedback-${fb.feedback.basic_type}`;
    text.textContent = fb.feedback.text_cn;
    box.appendChild(text);
    if (this.endingReady) {
      const link = doc.createElement("button");
      link.className = "see-ending";
      link.textContent = "去看你的故事结局 →";
      link.addEventListener("click", () => {
        const win = doc.defaultView;
        if (win) win.location.hash = `#/ending/${this.options.sessionId}`;
      });
      box.appendChild(link);
    }
    return box;
  }
}
